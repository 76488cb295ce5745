#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mcml/dataset.hpp"
#include "mcml/footprint.hpp"

namespace mcml {

const std::vector<int>& standard_budgets(); // {8, 16, 32, 64, 128}
bool is_standard_budget(int kb);

// Report row names, Table-7 order.
extern const std::vector<std::string> kReportFamilies;

struct EvalCell {
    std::string family;
    int budget_kb = 0;
    bool feasible = true;
    std::string spec_text;
    std::uint64_t footprint_bytes = 0;
    std::string footprint_kb; // 2 decimals
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
};

struct EvalReport {
    std::vector<EvalCell> cells;
    std::uint64_t test_reads = 0;    // test-batch access audit
    std::size_t selected_models = 0; // models that earned a test pass
};

// Fraction of argmax-correct predictions; ties already resolve to the
// lowest class inside the per-family predictors. `read_counter`, when
// given, is bumped once per image touched.
double evaluate(const std::function<int(const LabeledImage&)>& predict, const Dataset& data,
                std::uint64_t* read_counter = nullptr);

struct ExperimentConfig {
    std::vector<std::string> families; // directconv protonn bonsai fastgrnn-row|-channel|-multi
    std::vector<int> budgets;
    std::uint64_t seed = 42;
    std::string scale = "desk"; // desk | full
    std::string data_dir;
    std::string out_dir;
};

// key=value lines; families/budgets comma-separated; '#' comments.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// Budget-driven search for every requested family, validation-based
// selection, one test pass per selected model. Desk scale substitutes the
// reduced candidate counts, epochs and subset sizes documented in
// desk_scale_notes().
EvalReport run_experiment(const ExperimentConfig& cfg, const DatasetSplit& split);

std::string desk_scale_notes();

enum class ReportFormat { Markdown, Csv };
std::string emit_report(const EvalReport& report, ReportFormat format);
EvalReport parse_report_csv(const std::string& text);

// Loads any serialized model by its family tag and wraps it as a predictor.
std::function<int(const LabeledImage&)> load_predictor(const std::string& path,
                                                       std::string* family_out = nullptr);

} // namespace mcml
