#include "psm/config.hpp"

#include <fstream>
#include <sstream>

#include "psm/partition.hpp"

namespace psm {

std::vector<int> TrainConfig::effective_milestones() const {
    if (!milestones.empty()) return milestones;
    std::vector<int> ms;
    if (steps / 2 >= 1) ms.push_back(steps / 2);
    if (steps * 4 / 5 > steps / 2) ms.push_back(steps * 4 / 5);
    return ms;
}

ModelConfig TrainConfig::model_config(TaskKind task) const {
    ModelConfig mc;
    mc.task = task;
    mc.scale = scale;
    mc.c0 = c0;
    mc.n_blocks = n_blocks;
    mc.state_n = state_n;
    mc.deepest = partition_level_from_string(split_level);
    mc.reduction_r = reduction_r;
    mc.alpha_init = alpha_init;
    return mc;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_line(int lineno, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(lineno) + ": " + msg);
}

double parse_double(const std::string& v, int lineno) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) bad_line(lineno, "malformed number '" + v + "'");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_line(lineno, "malformed number '" + v + "'");
    }
}

int parse_int(const std::string& v, int lineno) {
    try {
        std::size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) bad_line(lineno, "malformed integer '" + v + "'");
        return static_cast<int>(d);
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_line(lineno, "malformed integer '" + v + "'");
    }
}

std::vector<int> parse_int_list(const std::string& v, int lineno) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_int(item, lineno));
    }
    return out;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) bad_line(lineno, "expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) bad_line(lineno, "empty key");

        if (key == "split_level") {
            try {
                partition_level_from_string(val);
            } catch (const ConfigError& e) {
                bad_line(lineno, e.what());
            }
            cfg.split_level = val;
        } else if (key == "n_blocks") {
            cfg.n_blocks = parse_int(val, lineno);
            if (cfg.n_blocks < 1) bad_line(lineno, "n_blocks must be >= 1");
        } else if (key == "c0") {
            cfg.c0 = parse_int(val, lineno);
            if (cfg.c0 < 1) bad_line(lineno, "c0 must be >= 1");
        } else if (key == "state_n") {
            cfg.state_n = parse_int(val, lineno);
            if (cfg.state_n < 1) bad_line(lineno, "state_n must be >= 1");
        } else if (key == "alpha_init") {
            cfg.alpha_init = parse_double(val, lineno);
        } else if (key == "reduction_r") {
            cfg.reduction_r = parse_int(val, lineno);
            if (cfg.reduction_r < 1) bad_line(lineno, "reduction_r must be >= 1");
        } else if (key == "sigma") {
            cfg.sigma = parse_double(val, lineno);
            if (cfg.sigma <= 0) bad_line(lineno, "sigma must be > 0");
        } else if (key == "scale") {
            cfg.scale = parse_int(val, lineno);
            if (cfg.scale < 2 || cfg.scale > 4) bad_line(lineno, "scale must be 2, 3 or 4");
        } else if (key == "loss") {
            if (val != "auto" && val != "l1" && val != "charbonnier")
                bad_line(lineno, "loss must be auto, l1 or charbonnier");
            cfg.loss = val;
        } else if (key == "charbonnier_eps") {
            cfg.charbonnier_eps = parse_double(val, lineno);
            if (cfg.charbonnier_eps <= 0) bad_line(lineno, "charbonnier_eps must be > 0");
        } else if (key == "lr") {
            cfg.lr = parse_double(val, lineno);
            if (cfg.lr <= 0) bad_line(lineno, "lr must be > 0");
        } else if (key == "beta1") {
            cfg.beta1 = parse_double(val, lineno);
        } else if (key == "beta2") {
            cfg.beta2 = parse_double(val, lineno);
        } else if (key == "batch") {
            cfg.batch = parse_int(val, lineno);
            if (cfg.batch < 1) bad_line(lineno, "batch must be >= 1");
        } else if (key == "crop") {
            cfg.crop = parse_int(val, lineno);
            if (cfg.crop < 8) bad_line(lineno, "crop must be >= 8");
        } else if (key == "steps") {
            cfg.steps = parse_int(val, lineno);
            if (cfg.steps < 1) bad_line(lineno, "steps must be >= 1");
        } else if (key == "milestones") {
            cfg.milestones = parse_int_list(val, lineno);
            for (std::size_t i = 1; i < cfg.milestones.size(); ++i)
                if (cfg.milestones[i] <= cfg.milestones[i - 1])
                    bad_line(lineno, "milestones must be strictly increasing");
        } else if (key == "seed") {
            try {
                std::size_t pos = 0;
                cfg.seed = std::stoull(val, &pos);
                if (pos != val.size()) bad_line(lineno, "malformed seed '" + val + "'");
            } catch (const ConfigError&) {
                throw;
            } catch (...) {
                bad_line(lineno, "malformed seed '" + val + "'");
            }
        } else if (key == "precision") {
            if (val != "f32" && val != "f64") bad_line(lineno, "precision must be f32 or f64");
            cfg.precision = val;
        } else if (key == "val_every") {
            cfg.val_every = parse_int(val, lineno);
            if (cfg.val_every < 1) bad_line(lineno, "val_every must be >= 1");
        } else {
            bad_line(lineno, "unknown key '" + key + "'");
        }
    }
    return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out << "split_level=" << cfg.split_level << "\n";
    out << "n_blocks=" << cfg.n_blocks << "\n";
    out << "c0=" << cfg.c0 << "\n";
    out << "state_n=" << cfg.state_n << "\n";
    out << "alpha_init=" << cfg.alpha_init << "\n";
    out << "reduction_r=" << cfg.reduction_r << "\n";
    out << "sigma=" << cfg.sigma << "\n";
    out << "scale=" << cfg.scale << "\n";
    out << "loss=" << cfg.loss << "\n";
    out << "charbonnier_eps=" << cfg.charbonnier_eps << "\n";
    out << "lr=" << cfg.lr << "\n";
    out << "beta1=" << cfg.beta1 << "\n";
    out << "beta2=" << cfg.beta2 << "\n";
    out << "batch=" << cfg.batch << "\n";
    out << "crop=" << cfg.crop << "\n";
    out << "steps=" << cfg.steps << "\n";
    if (!cfg.milestones.empty()) {
        out << "milestones=";
        for (std::size_t i = 0; i < cfg.milestones.size(); ++i)
            out << (i ? "," : "") << cfg.milestones[i];
        out << "\n";
    }
    out << "seed=" << cfg.seed << "\n";
    out << "precision=" << cfg.precision << "\n";
    out << "val_every=" << cfg.val_every << "\n";
    return out.str();
}

}  // namespace psm
