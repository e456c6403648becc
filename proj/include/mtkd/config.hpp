#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtkd/data.hpp"
#include "mtkd/trainer.hpp"

namespace mtkd {

struct ConfigError : ParameterError {
    using ParameterError::ParameterError;
};

/// Fully-resolved application configuration: training hyperparameters, the
/// synthetic task, and output paths.
struct AppConfig {
    TrainConfig train;
    SyntheticSpec synthetic;
    std::string out_dir = "runs";
    std::string checkpoint = "teachers.mtkd";
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_real(const std::string& v, const std::string& key, std::size_t line) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                          "' expects a number, got '" + v + "'");
    }
}

inline std::size_t parse_count(const std::string& v, const std::string& key,
                               std::size_t line) {
    double d = parse_real(v, key, line);
    if (d < 0 || d != std::floor(d))
        throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                          "' expects a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(d);
}

inline bool parse_bool(const std::string& v, const std::string& key, std::size_t line) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                      "' expects true/false, got '" + v + "'");
}

inline std::vector<double> parse_real_list(const std::string& v, const std::string& key,
                                           std::size_t line) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_real(trim(item), key, line));
    if (out.empty())
        throw ConfigError("config line " + std::to_string(line) + ": key '" + key +
                          "' expects a comma list");
    return out;
}

inline std::vector<std::size_t> parse_count_list(const std::string& v,
                                                 const std::string& key,
                                                 std::size_t line) {
    std::vector<std::size_t> out;
    for (double d : parse_real_list(v, key, line))
        out.push_back(static_cast<std::size_t>(d));
    return out;
}

}  // namespace detail

/// Apply one key=value pair onto the config. Unknown keys are hard errors:
/// a typo must never be silently absorbed.
inline void apply_config_key(AppConfig& cfg, const std::string& key,
                             const std::string& value, std::size_t line) {
    using namespace detail;
    TrainConfig& t = cfg.train;
    SyntheticSpec& s = cfg.synthetic;
    if (key == "train.seed") t.seed = parse_count(value, key, line);
    else if (key == "train.epochs") t.epochs = parse_count(value, key, line);
    else if (key == "train.batch_size") t.batch_size = parse_count(value, key, line);
    else if (key == "train.lr_student") t.lr_student = parse_real(value, key, line);
    else if (key == "train.lr_agent") t.lr_agent = parse_real(value, key, line);
    else if (key == "train.momentum") t.momentum = parse_real(value, key, line);
    else if (key == "train.weight_decay") t.weight_decay = parse_real(value, key, line);
    else if (key == "train.alpha") t.kd.alpha = parse_real(value, key, line);
    else if (key == "train.beta") t.kd.beta = parse_real(value, key, line);
    else if (key == "train.temperature") t.kd.temperature = parse_real(value, key, line);
    else if (key == "train.teacher_count") t.teacher_count = parse_count(value, key, line);
    else if (key == "train.strategy") t.strategy = strategy_from_name(value);
    else if (key == "train.state_mask") t.state_mask = StateMask::from_name(value);
    else if (key == "train.state_zscore") t.state_zscore = parse_bool(value, key, line);
    else if (key == "train.reward_norm") t.reward_norm = reward_norm_from_name(value);
    else if (key == "train.pg_surrogate") t.pg_surrogate = pg_surrogate_from_name(value);
    else if (key == "train.reward_timing") t.reward_timing = reward_timing_from_name(value);
    else if (key == "train.learnable_gammas") t.learnable_gammas = parse_bool(value, key, line);
    else if (key == "train.teacher_hidden") t.teacher_hidden = parse_count_list(value, key, line);
    else if (key == "train.student_hidden") t.student_hidden = parse_count(value, key, line);
    else if (key == "train.agent_hidden") t.agent_hidden = parse_count(value, key, line);
    else if (key == "train.teacher_epochs") t.teacher_epochs = parse_count(value, key, line);
    else if (key == "train.teacher_lr") t.teacher_lr = parse_real(value, key, line);
    else if (key == "train.plateau_patience") t.plateau_patience = parse_count(value, key, line);
    else if (key == "synthetic.classes") s.classes = parse_count(value, key, line);
    else if (key == "synthetic.dim") s.dim = parse_count(value, key, line);
    else if (key == "synthetic.clusters_per_class") s.clusters_per_class = parse_count(value, key, line);
    else if (key == "synthetic.spread") s.spread = parse_real(value, key, line);
    else if (key == "synthetic.samples_per_class") s.samples_per_class = parse_count(value, key, line);
    else if (key == "synthetic.noise_rates") s.noise_rates = parse_real_list(value, key, line);
    else if (key == "synthetic.noise_mode") s.noise_mode = noise_mode_from_name(value);
    else if (key == "synthetic.test_fraction") s.test_fraction = parse_real(value, key, line);
    else if (key == "paths.out_dir") cfg.out_dir = value;
    else if (key == "paths.checkpoint") cfg.checkpoint = value;
    else
        throw ConfigError("config line " + std::to_string(line) + ": unknown key '" +
                          key + "'");
}

/// Parse a flat key=value config with optional [section] headers. Keys in a
/// section are addressed as section.key; '#' and ';' start comments.
inline AppConfig parse_config(std::istream& in) {
    AppConfig cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        apply_config_key(cfg, key, value, lineno);
    }
    // keep the synthetic task and the pool consistent unless overridden
    cfg.synthetic.seed = cfg.train.seed;
    return cfg;
}

inline AppConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    return parse_config(f);
}

/// Echo the fully-resolved configuration, re-parseable by load_config.
inline std::string dump_config(const AppConfig& cfg) {
    std::ostringstream out;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    const TrainConfig& t = cfg.train;
    out << "[train]\n";
    out << "seed = " << t.seed << "\n";
    out << "epochs = " << t.epochs << "\n";
    out << "batch_size = " << t.batch_size << "\n";
    out << "lr_student = " << num(t.lr_student) << "\n";
    out << "lr_agent = " << num(t.lr_agent) << "\n";
    out << "momentum = " << num(t.momentum) << "\n";
    out << "weight_decay = " << num(t.weight_decay) << "\n";
    out << "alpha = " << num(t.kd.alpha) << "\n";
    out << "beta = " << num(t.kd.beta) << "\n";
    out << "temperature = " << num(t.kd.temperature) << "\n";
    out << "teacher_count = " << t.teacher_count << "\n";
    out << "strategy = " << strategy_name(t.strategy) << "\n";
    out << "state_mask = " << t.state_mask.name() << "\n";
    out << "state_zscore = " << (t.state_zscore ? "true" : "false") << "\n";
    out << "reward_norm = "
        << (t.reward_norm == RewardNorm::RescaledMean ? "rescaled-mean" : "literal")
        << "\n";
    out << "pg_surrogate = " << (t.pg_surrogate == PgSurrogate::Log ? "log" : "linear")
        << "\n";
    out << "reward_timing = " << (t.reward_timing == RewardTiming::Post ? "post" : "pre")
        << "\n";
    out << "learnable_gammas = " << (t.learnable_gammas ? "true" : "false") << "\n";
    out << "teacher_hidden = ";
    for (std::size_t i = 0; i < t.teacher_hidden.size(); ++i)
        out << (i ? "," : "") << t.teacher_hidden[i];
    out << "\n";
    out << "student_hidden = " << t.student_hidden << "\n";
    out << "agent_hidden = " << t.agent_hidden << "\n";
    out << "teacher_epochs = " << t.teacher_epochs << "\n";
    out << "teacher_lr = " << num(t.teacher_lr) << "\n";
    out << "plateau_patience = " << t.plateau_patience << "\n";
    const SyntheticSpec& s = cfg.synthetic;
    out << "\n[synthetic]\n";
    out << "classes = " << s.classes << "\n";
    out << "dim = " << s.dim << "\n";
    out << "clusters_per_class = " << s.clusters_per_class << "\n";
    out << "spread = " << num(s.spread) << "\n";
    out << "samples_per_class = " << s.samples_per_class << "\n";
    out << "noise_rates = ";
    for (std::size_t i = 0; i < s.noise_rates.size(); ++i)
        out << (i ? "," : "") << num(s.noise_rates[i]);
    out << "\n";
    out << "noise_mode = " << noise_mode_name(s.noise_mode) << "\n";
    out << "test_fraction = " << num(s.test_fraction) << "\n";
    out << "\n[paths]\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    out << "checkpoint = " << cfg.checkpoint << "\n";
    return out.str();
}

}  // namespace mtkd
