#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mtkd/checkpoint.hpp"

using namespace mtkd;

namespace {

std::map<std::string, DenseNet> sample_nets() {
    std::map<std::string, DenseNet> nets;
    nets.emplace("student", DenseNet(NetSpec::mlp({4, 6, 3}, 21)));
    nets.emplace("teacher_0", DenseNet(NetSpec::mlp({4, 8, 8, 3}, 22)));
    nets.emplace("teacher_1", DenseNet(NetSpec::mlp({4, 5, 5, 3}, 23)));
    return nets;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint round trip restores bit-identical parameters") {
    auto nets = sample_nets();
    std::string path = temp_path("ckpt_roundtrip.mtkd");
    save_checkpoint(nets, path);
    auto loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == nets.size());
    for (const auto& [name, net] : nets) {
        REQUIRE(loaded.count(name) == 1);
        const DenseNet& other = loaded.at(name);
        CHECK(other.spec().layer_sizes == net.spec().layer_sizes);
        for (std::size_t k = 0; k < net.layers().size(); ++k) {
            CHECK(other.layers()[k].weights.value.data ==
                  net.layers()[k].weights.value.data);
            CHECK(other.layers()[k].bias.value.data == net.layers()[k].bias.value.data);
        }
    }
}

TEST_CASE("corrupt magic byte raises a format error at offset zero") {
    auto nets = sample_nets();
    std::string path = temp_path("ckpt_badmagic.mtkd");
    save_checkpoint(nets, path);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(0);
        f.put('X');
    }
    try {
        load_checkpoint(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 0);
    }
}

TEST_CASE("version mismatch and truncation are format errors") {
    auto nets = sample_nets();
    std::string path = temp_path("ckpt_badver.mtkd");
    save_checkpoint(nets, path);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(4);
        f.put('\x02');
    }
    try {
        load_checkpoint(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset == 4);
    }

    std::string trunc = temp_path("ckpt_trunc.mtkd");
    save_checkpoint(nets, trunc);
    auto size = std::filesystem::file_size(trunc);
    std::filesystem::resize_file(trunc, size - 16);
    CHECK_THROWS_AS(load_checkpoint(trunc), FormatError);
}

TEST_CASE("manifest lists every net name exactly once") {
    auto nets = sample_nets();
    std::string path = temp_path("ckpt_manifest.mtkd");
    save_checkpoint(nets, path);

    std::ifstream f(path, std::ios::binary);
    char header[9];
    f.read(header, 9);
    std::uint32_t mlen = 0;
    for (int i = 0; i < 4; ++i)
        mlen |= std::uint32_t(static_cast<unsigned char>(header[5 + i])) << (8 * i);
    std::string manifest(mlen, '\0');
    f.read(manifest.data(), mlen);

    auto parsed = nlohmann::json::parse(manifest);
    std::map<std::string, int> counts;
    for (const auto& entry : parsed.at("nets"))
        counts[entry.at("name").get<std::string>()]++;
    REQUIRE(counts.size() == nets.size());
    for (const auto& [name, count] : counts) {
        CHECK(nets.count(name) == 1);
        CHECK(count == 1);
    }
}
