#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wsol/data.hpp"
#include "wsol/losses.hpp"
#include "wsol/model.hpp"
#include "wsol/train.hpp"

namespace wsol {

/// Everything a run can configure. Keys in a configuration file mirror the
/// field names below; "seed" sets the model, dataset, and training seeds
/// together.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    LossConfig loss;
    DatasetSpec dataset;
};

/// Applies one key/value pair. Throws ConfigError for unknown keys or
/// unparseable values.
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

/// Reads a line-oriented "key = value" file with '#' comments and applies
/// every entry. Errors carry the file name and line number.
void load_config_file(RunConfig& config, const std::filesystem::path& path);

}  // namespace wsol
