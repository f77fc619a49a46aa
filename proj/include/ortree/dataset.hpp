#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ortree {

// Parsed numeric table: header names plus row-major cells, all finite doubles.
struct RawTable {
    std::vector<std::string> columns;
    std::vector<double> cells; // rows() x columns.size(), row-major

    std::size_t rows() const { return columns.empty() ? 0 : cells.size() / columns.size(); }
    double cell(std::size_t r, std::size_t c) const { return cells[r * columns.size() + c]; }
};

// Strict CSV reader: header row, comma-separated numeric cells, no missing
// fields, no NaN/inf. Errors name the file, row and column.
RawTable load_table(const std::string& path);

// In-memory construction with the same validation as load_table.
RawTable table_from_rows(std::vector<std::string> columns,
                         const std::vector<std::vector<double>>& rows);

// Order-insensitive only in that it hashes the exact bytes of names and cell
// bit patterns; any content or layout change changes the digest.
std::uint64_t table_digest(const RawTable& table);

struct ScaleParam {
    double min = 0.0;
    double max = 0.0;
    bool constant = false;
};

// Maps a raw value into the unit interval used for routing; constant columns
// carry no information and map to 0 everywhere.
double scale_value(const ScaleParam& sp, double raw);
double unscale_value(const ScaleParam& sp, double scaled);

// Preprocessed training data: features min-max scaled to [0,1] column-wise,
// targets kept in original units, plus the per-feature machinery the solver
// needs (distinct value lists, argsort orders, gap statistics).
struct Dataset {
    std::vector<std::string> feature_names;
    std::string target_name;
    std::size_t n = 0;
    std::size_t p = 0;

    std::vector<std::vector<double>> cols;     // scaled, column-major
    std::vector<std::vector<double>> raw_cols; // original units, column-major
    std::vector<double> y;                     // original units

    std::vector<ScaleParam> scale;
    std::vector<std::vector<double>> sorted_values;  // distinct scaled values, ascending
    std::vector<std::vector<std::uint32_t>> order;   // sample indices by ascending scaled value
    std::vector<double> eps;                         // min positive gap per feature (0 if constant)
    double eps_min = 0.0;
    double eps_max = 0.0;

    double y_mean = 0.0;
    double y_min = 0.0;
    double y_max = 0.0;
    double baseline_sse = 0.0; // sum of squared deviations from the target mean
    double mf = 0.0;           // target range, y_max - y_min

    std::uint64_t digest = 0;

    // Features with at least two distinct values; the only legal split features.
    std::vector<int> usable_features() const;
};

Dataset preprocess(const RawTable& table, const std::string& target);

// Scaled feature matrix plus targets; used for held-out rows and predictions.
struct Frame {
    std::size_t n = 0;
    std::size_t p = 0;
    std::vector<double> x; // row-major
    std::vector<double> y;

    double at(std::size_t r, std::size_t c) const { return x[r * p + c]; }
};

Frame train_frame(const Dataset& ds);

struct SplitSpec {
    double train_fraction = 0.7;
    std::uint64_t seed = 0;
};

struct TrainTest {
    Dataset train;              // re-preprocessed from the training rows
    Frame test;                 // scaled with the training split's parameters
    std::vector<std::uint32_t> train_rows;
    std::vector<std::uint32_t> test_rows;
};

// Seeded shuffle, prefix split, training scaling applied to both portions.
TrainTest split(const Dataset& full, const SplitSpec& spec);

} // namespace ortree
