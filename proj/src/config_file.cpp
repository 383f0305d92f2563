#include "wsol/config_file.hpp"

#include <charconv>
#include <fstream>

namespace wsol {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used == value.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config: value '" + value + "' for key '" + key + "' is not a number");
}

int parse_int(const std::string& key, const std::string& value) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError("config: value '" + value + "' for key '" + key + "' is not an integer");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config: value '" + value + "' for key '" + key + "' is not a boolean");
}

}  // namespace

void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value) {
    // Model
    if (key == "input_size") {
        config.model.input_size = parse_int(key, value);
        config.dataset.image_size = config.model.input_size;
    } else if (key == "num_classes") {
        config.model.num_classes = parse_int(key, value);
        config.dataset.num_classes = config.model.num_classes;
    } else if (key == "feature_channels") {
        config.model.feature_channels = parse_int(key, value);
    } else if (key == "feature_stride") {
        config.model.feature_stride = parse_int(key, value);
    } else if (key == "backbone_blocks") {
        config.model.backbone_blocks = parse_int(key, value);
    } else if (key == "seed") {
        const int seed = parse_int(key, value);
        if (seed < 0) throw ConfigError("config: seed must be non-negative");
        config.model.seed = static_cast<std::uint32_t>(seed);
        config.train.seed = static_cast<std::uint32_t>(seed);
        config.dataset.seed = static_cast<std::uint32_t>(seed);
    }
    // Training
    else if (key == "learning_rate") {
        config.train.learning_rate = parse_double(key, value);
    } else if (key == "momentum") {
        config.train.momentum = parse_double(key, value);
    } else if (key == "epochs") {
        config.train.epochs = parse_int(key, value);
    } else if (key == "batch_size") {
        config.train.batch_size = parse_int(key, value);
    } else if (key == "shuffle") {
        config.train.shuffle = parse_bool(key, value);
    }
    // Loss
    else if (key == "t1") {
        config.loss.thresholds.t1 = parse_double(key, value);
    } else if (key == "t2") {
        config.loss.thresholds.t2 = parse_double(key, value);
    } else if (key == "t3") {
        config.loss.thresholds.t3 = parse_double(key, value);
    } else if (key == "t4") {
        config.loss.thresholds.t4 = parse_double(key, value);
    } else if (key == "gamma1") {
        config.loss.gamma[0] = parse_double(key, value);
    } else if (key == "gamma2") {
        config.loss.gamma[1] = parse_double(key, value);
    } else if (key == "gamma3") {
        config.loss.gamma[2] = parse_double(key, value);
    } else if (key == "gamma4") {
        config.loss.gamma[3] = parse_double(key, value);
    } else if (key == "gamma5") {
        config.loss.gamma[4] = parse_double(key, value);
    } else if (key == "gamma6") {
        config.loss.gamma[5] = parse_double(key, value);
    } else if (key == "epsilon") {
        config.loss.epsilon = parse_double(key, value);
    } else if (key == "bas_detach_classifier") {
        config.loss.bas_detach_classifier = parse_bool(key, value);
    }
    // Dataset
    else if (key == "samples_per_class") {
        config.dataset.samples_per_class = parse_int(key, value);
    } else if (key == "noise_level") {
        config.dataset.noise_level = parse_double(key, value);
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

void load_config_file(RunConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line.erase(comment);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto equals = stripped.find('=');
        if (equals == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(stripped.substr(0, equals));
        const std::string value = trim(stripped.substr(equals + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            apply_config_entry(config, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

}  // namespace wsol
