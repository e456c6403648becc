// mtkd: multi-teacher knowledge distillation experiments with a
// policy-gradient weighting agent.
//
// Verbs: train-teachers, distill, ablate, report.
// Exit codes: 0 success, 1 runtime error, 2 usage/config error.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "mtkd/mtkd.hpp"

namespace fs = std::filesystem;
using namespace mtkd;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
}

AppConfig load_app_config(const std::string& config_path, std::uint64_t* seed_override,
                          const std::string& out_override) {
    AppConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (seed_override) {
        cfg.train.seed = *seed_override;
        // the dataset and teacher pool stay tied to the config seed so
        // checkpointed teachers remain valid across run seeds
    }
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
}

fs::path checkpoint_path(const AppConfig& cfg) {
    fs::path p(cfg.checkpoint);
    if (p.is_absolute()) return p;
    return fs::path(cfg.out_dir) / p;
}

std::vector<DenseNet> pool_from_checkpoint(const AppConfig& cfg) {
    fs::path path = checkpoint_path(cfg);
    if (!fs::exists(path))
        throw std::runtime_error("teacher checkpoint not found: " + path.string() +
                                 " (run train-teachers first)");
    std::map<std::string, DenseNet> nets = load_checkpoint(path.string());
    std::vector<DenseNet> pool;
    for (std::size_t m = 0;; ++m) {
        auto it = nets.find("teacher_" + std::to_string(m));
        if (it == nets.end()) break;
        pool.push_back(std::move(it->second));
    }
    if (pool.empty())
        throw std::runtime_error("checkpoint " + path.string() + " holds no teachers");
    return pool;
}

int cmd_train_teachers(const AppConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "config_resolved.ini", dump_config(cfg));

    SyntheticData data = gen_synthetic(cfg.synthetic);
    std::vector<DenseNet> pool = train_teachers(cfg.train, data);

    std::map<std::string, DenseNet> nets;
    std::cout << "teacher  noise_rate  test_acc\n";
    for (std::size_t m = 0; m < pool.size(); ++m) {
        double acc = evaluate(pool[m], data.dataset);
        double noise = m < cfg.synthetic.noise_rates.size()
                           ? cfg.synthetic.noise_rates[m]
                           : cfg.synthetic.noise_rates.back();
        std::printf("%7zu  %10.2f  %8.4f\n", m, noise, acc);
        nets.emplace("teacher_" + std::to_string(m), std::move(pool[m]));
    }
    fs::path path = checkpoint_path(cfg);
    save_checkpoint(nets, path.string());
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_distill(AppConfig cfg, const std::string& strategy, std::size_t seed_count) {
    cfg.train.strategy = strategy_from_name(strategy);
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "config_resolved.ini", dump_config(cfg));

    SyntheticData data = gen_synthetic(cfg.synthetic);
    std::vector<DenseNet> pool;
    if (cfg.train.strategy != Strategy::Baseline) pool = pool_from_checkpoint(cfg);

    std::vector<double> final_accs;
    std::uint64_t base_seed = cfg.train.seed;
    for (std::size_t s = 0; s < seed_count; ++s) {
        TrainConfig run_cfg = cfg.train;
        run_cfg.seed = base_seed + s;
        std::vector<DenseNet> run_pool = pool;  // fresh caches per run
        RunMetrics rm = run_strategy(run_cfg, data, run_pool);
        fs::path csv = fs::path(cfg.out_dir) /
                       ("metrics_" + strategy + "_seed" + std::to_string(run_cfg.seed) +
                        ".csv");
        write_file(csv, metrics_to_csv(rm));
        final_accs.push_back(rm.rows.back().acc);
        std::printf("seed %llu: final acc %.4f (%s)\n",
                    static_cast<unsigned long long>(run_cfg.seed),
                    rm.rows.back().acc, csv.string().c_str());
    }
    double mu = mean(final_accs);
    double var = 0.0;
    for (double a : final_accs) var += (a - mu) * (a - mu);
    std::printf("%s: %.4f +- %.4f over %zu seeds\n", strategy.c_str(), mu,
                std::sqrt(var / static_cast<double>(final_accs.size())),
                final_accs.size());
    return 0;
}

int cmd_report(const std::string& metrics_dir) {
    std::vector<std::string> files;
    if (fs::exists(metrics_dir))
        for (const auto& e : fs::directory_iterator(metrics_dir)) {
            std::string name = e.path().filename().string();
            if (name.rfind("metrics_", 0) == 0 && e.path().extension() == ".csv")
                files.push_back(e.path().string());
        }
    if (files.empty())
        throw std::runtime_error("no metrics_*.csv files found in " + metrics_dir);
    std::sort(files.begin(), files.end());

    std::vector<RunMetrics> runs;
    for (const std::string& f : files) runs.push_back(parse_metrics_csv(f));

    auto summary = summarize_runs(runs);
    std::string table = summary_table_text(summary);
    std::cout << table;
    write_file(fs::path(metrics_dir) / "summary.txt", table);
    write_file(fs::path(metrics_dir) / "summary.csv", summary_table_csv(summary));

    // accuracy curves: one series per run file
    std::vector<Series> acc_series;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        Series s;
        s.name = fs::path(files[i]).stem().string().substr(8);  // after "metrics_"
        for (const EpochRow& r : runs[i].rows) s.values.push_back(r.acc);
        acc_series.push_back(std::move(s));
    }
    write_file(fs::path(metrics_dir) / "accuracy.svg",
               svg_line_chart(acc_series, "Test accuracy by epoch", "acc"));

    // per-teacher mean-weight curves, 2M series, first run of each strategy
    std::map<std::string, const RunMetrics*> first_by_strategy;
    for (const RunMetrics& rm : runs)
        if (!first_by_strategy.count(rm.strategy)) first_by_strategy[rm.strategy] = &rm;
    for (const auto& [name, rm] : first_by_strategy) {
        if (rm->teacher_count == 0) continue;
        std::vector<Series> ws;
        for (std::size_t m = 0; m < rm->teacher_count; ++m) {
            Series sl, sf;
            sl.name = "w_l_" + std::to_string(m + 1);
            sf.name = "w_f_" + std::to_string(m + 1);
            for (const EpochRow& r : rm->rows) {
                sl.values.push_back(r.mean_w_logit[m]);
                sf.values.push_back(r.mean_w_feature[m]);
            }
            ws.push_back(std::move(sl));
            ws.push_back(std::move(sf));
        }
        write_file(fs::path(metrics_dir) / ("weights_" + name + ".svg"),
                   svg_line_chart(ws, "Mean teacher weights (" + name + ")", "weight"));
    }
    std::cout << "report written to " << metrics_dir << "\n";
    return 0;
}

struct AblateCell {
    std::string label;
    TrainConfig train;
    std::size_t teacher_count;  // teachers drawn from the pool prefix
};

int cmd_ablate(const AppConfig& cfg, const std::string& axis, std::size_t seed_count) {
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "config_resolved.ini", dump_config(cfg));

    SyntheticData data = gen_synthetic(cfg.synthetic);
    std::vector<DenseNet> full_pool = train_teachers(cfg.train, data);

    std::vector<AblateCell> cells;
    auto base = cfg.train;
    if (axis == "strategy") {
        for (const char* s : {"baseline", "aver", "conf", "div", "rl"}) {
            AblateCell c{s, base, full_pool.size()};
            c.train.strategy = strategy_from_name(s);
            cells.push_back(std::move(c));
        }
    } else if (axis == "state") {
        for (const char* m : {"performance", "gaps", "full"}) {
            AblateCell c{std::string("state-") + m, base, full_pool.size()};
            c.train.strategy = Strategy::Rl;
            c.train.state_mask = StateMask::from_name(m);
            cells.push_back(std::move(c));
        }
    } else if (axis == "gamma") {
        for (bool learnable : {false, true}) {
            AblateCell c{learnable ? "gamma-learnable" : "gamma-constant", base,
                         full_pool.size()};
            c.train.strategy = Strategy::Rl;
            c.train.learnable_gammas = learnable;
            cells.push_back(std::move(c));
        }
    } else if (axis == "alpha-beta") {
        for (double alpha : {0.5, 1.0, 2.0})
            for (double beta : {1.0, 5.0, 10.0}) {
                char label[48];
                std::snprintf(label, sizeof label, "a%g-b%g", alpha, beta);
                AblateCell c{label, base, full_pool.size()};
                c.train.strategy = Strategy::Rl;
                c.train.kd.alpha = alpha;
                c.train.kd.beta = beta;
                cells.push_back(std::move(c));
            }
    } else if (axis == "teachers") {
        for (std::size_t m = 1; m <= full_pool.size(); ++m) {
            AblateCell c{"teachers-" + std::to_string(m), base, m};
            c.train.strategy = Strategy::Rl;
            c.train.teacher_count = m;
            cells.push_back(std::move(c));
        }
    } else {
        throw CLI::ValidationError("--axis", "unknown axis '" + axis + "'");
    }

    // expand over seeds
    struct Job {
        AblateCell cell;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const AblateCell& c : cells)
        for (std::size_t s = 0; s < seed_count; ++s)
            jobs.push_back(Job{c, cfg.train.seed + s});

    std::size_t workers = 1;
    if (const char* env = std::getenv("MTKD_RL_THREADS")) {
        workers = std::max<std::size_t>(1, std::strtoull(env, nullptr, 10));
        workers = std::min(workers, jobs.size());
    }

    std::vector<RunMetrics> results(jobs.size());
    std::vector<std::string> labels(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex io_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            Job& job = jobs[j];
            TrainConfig run_cfg = job.cell.train;
            run_cfg.seed = job.seed;
            std::vector<DenseNet> pool(full_pool.begin(),
                                       full_pool.begin() + static_cast<std::ptrdiff_t>(
                                                               job.cell.teacher_count));
            RunMetrics rm = run_strategy(run_cfg, data, pool);
            rm.strategy = job.cell.label;  // tag rows with the grid label
            for (EpochRow& r : rm.rows) r.strategy = job.cell.label;
            fs::path dir = fs::path(cfg.out_dir) / job.cell.label;
            fs::create_directories(dir);
            write_file(dir / ("metrics_" + job.cell.label + "_seed" +
                              std::to_string(job.seed) + ".csv"),
                       metrics_to_csv(rm));
            {
                std::lock_guard<std::mutex> lock(io_mutex);
                std::printf("%-18s seed %llu: acc %.4f\n", job.cell.label.c_str(),
                            static_cast<unsigned long long>(job.seed),
                            rm.rows.back().acc);
            }
            results[j] = std::move(rm);
            labels[j] = job.cell.label;
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t + 1 < workers; ++t) threads.emplace_back(worker);
    worker();
    for (std::thread& t : threads) t.join();

    auto summary = summarize_runs(results);
    std::string table = summary_table_text(summary);
    std::cout << "\n" << table;
    write_file(fs::path(cfg.out_dir) / "ablate_summary.txt", table);
    write_file(fs::path(cfg.out_dir) / "ablate_summary.csv", summary_table_csv(summary));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-teacher knowledge distillation with an RL weighting agent"};
    app.require_subcommand(1);

    std::string config_path, out_dir, strategy = "rl", axis = "strategy";
    std::string metrics_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t seed_count = 1;

    app.add_option("--config", config_path, "config file path")->capture_default_str();
    app.add_option_function<std::uint64_t>(
           "--seed",
           [&](std::uint64_t v) {
               seed = v;
               seed_set = true;
           },
           "base run seed (overrides config)");
    app.add_option("--out", out_dir, "output directory (overrides config)");

    auto* tt = app.add_subcommand("train-teachers", "train and checkpoint the teacher pool");
    auto* di = app.add_subcommand("distill", "run multi-teacher distillation");
    di->add_option("--strategy", strategy, "baseline|aver|conf|div|rl")
        ->capture_default_str();
    di->add_option("--seeds", seed_count, "number of seeds")->capture_default_str();
    auto* ab = app.add_subcommand("ablate", "run an ablation grid");
    ab->add_option("--axis", axis, "strategy|state|gamma|alpha-beta|teachers")
        ->capture_default_str();
    ab->add_option("--seeds", seed_count, "number of seeds")->capture_default_str();
    auto* rp = app.add_subcommand("report", "summarize metrics and emit SVG curves");
    rp->add_option("--metrics", metrics_dir, "directory holding metrics_*.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        AppConfig cfg =
            load_app_config(config_path, seed_set ? &seed : nullptr, out_dir);
        if (tt->parsed()) return cmd_train_teachers(cfg);
        if (di->parsed()) return cmd_distill(cfg, strategy, seed_count);
        if (ab->parsed()) return cmd_ablate(cfg, axis, seed_count);
        if (rp->parsed())
            return cmd_report(metrics_dir.empty() ? cfg.out_dir : metrics_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ParameterError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
