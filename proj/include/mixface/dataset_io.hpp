#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mixface/synth_conditions.hpp"

namespace mixface {

/// Files written by write_dataset, relative to the dataset directory.
const std::vector<std::string>& dataset_file_names();

/// Decimal text with 9 significant digits.
std::string format_number(double x);

/// Writes meta.json, samples.csv, pairs_Q1..4.csv, train_index.csv and
/// identities.csv. Creates `dir` if needed; throws Io on failure.
void write_dataset(const DatasetSplit& split, const std::filesystem::path& dir);

/// Inverse of write_dataset. Features come back rounded to 9 digits.
/// Throws Io on missing or malformed files.
DatasetSplit read_dataset(const std::filesystem::path& dir);

}  // namespace mixface
