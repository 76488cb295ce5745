#include "mcml/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "mcml/bonsai.hpp"
#include "mcml/cnn_inplace.hpp"
#include "mcml/cnn_train.hpp"
#include "mcml/fastgrnn.hpp"
#include "mcml/mathutil.hpp"
#include "mcml/protonn.hpp"
#include "mcml/serialize.hpp"

namespace mcml {

const std::vector<int>& standard_budgets() {
    static const std::vector<int> budgets = {8, 16, 32, 64, 128};
    return budgets;
}

bool is_standard_budget(int kb) {
    const auto& b = standard_budgets();
    return std::find(b.begin(), b.end(), kb) != b.end();
}

const std::vector<std::string> kReportFamilies = {
    "Direct Conv.", "ProtoNN", "Bonsai", "FastGRNN (Row-Major)", "FastGRNN (Channel-Major)",
    "Multi-FastGRNN",
};

double evaluate(const std::function<int(const LabeledImage&)>& predict, const Dataset& data,
                std::uint64_t* read_counter) {
    MCML_CHECK(!data.empty(), "evaluate: empty dataset");
    std::size_t hits = 0;
    for (const LabeledImage& li : data) {
        if (read_counter) ++*read_counter;
        if (predict(li) == li.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

} // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        MCML_CHECK(eq != std::string::npos, "config line missing '=': " + t);
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key == "families") {
            cfg.families = split_list(val);
        } else if (key == "budgets") {
            for (const std::string& b : split_list(val)) cfg.budgets.push_back(std::stoi(b));
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(std::stoull(val));
        } else if (key == "scale") {
            MCML_CHECK(val == "desk" || val == "full", "scale must be desk or full");
            cfg.scale = val;
        } else if (key == "data_dir") {
            cfg.data_dir = val;
        } else if (key == "out_dir") {
            cfg.out_dir = val;
        } else {
            MCML_CHECK(false, "unknown config key: " + key);
        }
    }
    for (int b : cfg.budgets)
        MCML_CHECK(is_standard_budget(b), "budget must be one of 8/16/32/64/128");
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    MCML_CHECK(in.good(), "cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

std::string desk_scale_notes() {
    return "desk scale: 5,000-image stratified training subset (500/class), 2,000-image "
           "validation subset for per-epoch selection, epochs capped at 30, candidate counts "
           "cut ~25x (CNN search n=30, ProtoNN 39 grid cells, Bonsai depths {2,3,5} with "
           "power-of-two dims, FastGRNN one candidate per budget); final validation accuracy "
           "is still measured on the full validation set";
}

namespace {

struct DeskConfig {
    bool desk = false;
    Dataset train_subset;       // desk: 500/class
    Dataset val_selection;      // desk: 200/class
    int epochs_cap = 0;         // desk: 30
};

struct FamilyOutcome {
    bool feasible = true;
    std::string spec_text;
    Footprint footprint;
    double val_accuracy = 0.0;
    std::function<int(const LabeledImage&)> predictor;
    std::vector<std::uint8_t> model_bytes;
};

FamilyOutcome run_directconv(int budget_kb, const DatasetSplit& split, const DeskConfig& desk,
                             std::uint64_t seed) {
    CnnSearchOptions opt;
    opt.seed = seed;
    DatasetSplit work;
    if (desk.desk) {
        opt.n_samples = 30;
        opt.partial_epochs = 5;
        opt.full_epochs = desk.epochs_cap;
        opt.selection_val = &desk.val_selection;
        work.train = desk.train_subset;
        work.validation = split.validation;
    } else {
        work.train = split.train;
        work.validation = split.validation;
    }
    FamilyOutcome out;
    try {
        CnnSearchResult r = sampling_search(budget_kb, work, opt);
        out.spec_text = print_arch(r.arch);
        out.footprint = r.footprint;
        out.val_accuracy = cnn_accuracy(r.model, split.validation);
        auto model = std::make_shared<CnnModel>(std::move(r.model));
        out.predictor = [model](const LabeledImage& li) {
            std::vector<float> logits = forward_naive(*model, li.image);
            return argmax_lowest(logits);
        };
        out.model_bytes = cnn_serialize(*model);
    } catch (const Error&) {
        out.feasible = false;
    }
    return out;
}

FamilyOutcome run_protonn(int budget_kb, const DatasetSplit& split, const DeskConfig& desk,
                          std::uint64_t seed) {
    LabeledVectors train = to_vectors(desk.desk ? desk.train_subset : split.train);
    LabeledVectors val = to_vectors(split.validation);
    LabeledVectors sel = desk.desk ? to_vectors(desk.val_selection) : val;
    ProtonnSearchOptions opt;
    opt.seed = seed;
    if (desk.desk) {
        opt.max_cells = 39;
        opt.train.epochs = desk.epochs_cap;
        opt.train.selection_val = &sel;
    }
    FamilyOutcome out;
    std::optional<ProtonnSearchResult> r = protonn_grid_search(budget_kb, train, val, opt);
    if (!r) {
        out.feasible = false;
        return out;
    }
    out.spec_text = "d=" + std::to_string(r->cell.d) + ",m=" + std::to_string(r->cell.m) +
                    ",rho=1.0,gamma=" + std::to_string(r->cell.gamma) +
                    ",lr=" + std::to_string(r->cell.lr);
    out.footprint = r->footprint;
    auto model = std::make_shared<ProtonnModel>(std::move(r->model));
    out.val_accuracy = protonn_accuracy(*model, val);
    out.predictor = [model](const LabeledImage& li) {
        return protonn_predict(*model, li.image.data);
    };
    out.model_bytes = protonn_serialize(*model);
    return out;
}

FamilyOutcome run_bonsai(int budget_kb, const DatasetSplit& split, const DeskConfig& desk,
                         std::uint64_t seed) {
    LabeledVectors train = to_vectors(desk.desk ? desk.train_subset : split.train);
    LabeledVectors val = to_vectors(split.validation);
    LabeledVectors sel = desk.desk ? to_vectors(desk.val_selection) : val;
    BonsaiSearchOptions opt;
    opt.train.seed = seed;
    if (desk.desk) {
        opt.desk = true;
        opt.train.epochs = desk.epochs_cap;
        opt.train.selection_val = &sel;
    }
    BonsaiSearchResult r = bonsai_search(budget_kb, train, val, opt);
    FamilyOutcome out;
    out.spec_text = "h=" + std::to_string(r.spec.depth) + ",dim=" + std::to_string(r.spec.dim);
    out.footprint = r.footprint;
    auto model = std::make_shared<BonsaiModel>(std::move(r.model));
    out.val_accuracy = bonsai_accuracy(*model, val);
    out.predictor = [model](const LabeledImage& li) {
        return bonsai_predict(*model, li.image.data);
    };
    out.model_bytes = bonsai_serialize(*model);
    return out;
}

FamilyOutcome run_fastgrnn(SeqMode mode, int budget_kb, const DatasetSplit& split,
                           const DeskConfig& desk, std::uint64_t seed) {
    std::vector<FastGrnnSpec> candidates = build_candidates(budget_kb, mode);
    FamilyOutcome out;
    if (candidates.empty()) {
        out.feasible = false;
        return out;
    }
    if (desk.desk && candidates.size() > 1) candidates.resize(1);
    DatasetSplit work;
    work.train = desk.desk ? desk.train_subset : split.train;
    work.validation = split.validation;
    FastGrnnTrainOptions opt;
    opt.seed = seed;
    if (desk.desk) {
        opt.epochs = desk.epochs_cap;
        opt.selection_val = &desk.val_selection;
    }
    opt.weight_decay = budget_kb >= 64 ? 5e-4f : 0.0f;
    opt.decay_at_two_thirds = budget_kb >= 32;
    std::optional<FastGrnnTrainResult> best;
    FastGrnnSpec best_spec{};
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        FastGrnnTrainOptions copt = opt;
        copt.seed = seed ^ (i * 0x51ed2701ULL + 11);
        FastGrnnTrainResult r = fastgrnn_train(work, candidates[i], copt);
        if (!best || r.best_val_accuracy > best->best_val_accuracy) {
            best_spec = candidates[i];
            best = std::move(r);
        }
    }
    out.spec_text = "hidden=" + std::to_string(best_spec.hidden) + ",dw=" +
                    std::to_string(best_spec.rho_w) + ",du=" + std::to_string(best_spec.rho_u);
    out.footprint = fastgrnn_footprint(best_spec);
    auto model = std::make_shared<FastGrnnClassifier>(std::move(best->model));
    out.val_accuracy = fastgrnn_accuracy(*model, split.validation);
    out.predictor = [model](const LabeledImage& li) { return fastgrnn_predict(*model, li.image); };
    out.model_bytes = fastgrnn_serialize(*model);
    return out;
}

std::string family_row_name(const std::string& token) {
    if (token == "directconv") return "Direct Conv.";
    if (token == "protonn") return "ProtoNN";
    if (token == "bonsai") return "Bonsai";
    if (token == "fastgrnn-row") return "FastGRNN (Row-Major)";
    if (token == "fastgrnn-channel") return "FastGRNN (Channel-Major)";
    if (token == "fastgrnn-multi") return "Multi-FastGRNN";
    MCML_CHECK(false, "unknown family: " + token);
    return "";
}

} // namespace

EvalReport run_experiment(const ExperimentConfig& cfg, const DatasetSplit& split) {
    std::vector<std::string> families;
    for (const std::string& f : cfg.families) {
        if (f == "fastgrnn") {
            families.push_back("fastgrnn-row");
            families.push_back("fastgrnn-channel");
            families.push_back("fastgrnn-multi");
        } else {
            family_row_name(f); // validates
            families.push_back(f);
        }
    }
    std::vector<int> budgets = cfg.budgets.empty() ? standard_budgets() : cfg.budgets;

    if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

    DeskConfig desk;
    if (cfg.scale == "desk") {
        desk.desk = true;
        desk.train_subset = stratified_subset(split.train, 500, cfg.seed ^ 0xdecaf);
        desk.val_selection = stratified_subset(split.validation, 200, cfg.seed ^ 0xbeef);
        desk.epochs_cap = 30;
    }

    EvalReport report;
    for (const std::string& family : families) {
        for (int budget : budgets) {
            std::uint64_t seed = cfg.seed ^ (std::hash<std::string>{}(family) * 31 + budget);
            FamilyOutcome outcome;
            if (family == "directconv")
                outcome = run_directconv(budget, split, desk, seed);
            else if (family == "protonn")
                outcome = run_protonn(budget, split, desk, seed);
            else if (family == "bonsai")
                outcome = run_bonsai(budget, split, desk, seed);
            else if (family == "fastgrnn-row")
                outcome = run_fastgrnn(SeqMode::RowMajor, budget, split, desk, seed);
            else if (family == "fastgrnn-channel")
                outcome = run_fastgrnn(SeqMode::ChannelMajor, budget, split, desk, seed);
            else
                outcome = run_fastgrnn(SeqMode::Multi, budget, split, desk, seed);

            EvalCell cell;
            cell.family = family_row_name(family);
            cell.budget_kb = budget;
            cell.feasible = outcome.feasible;
            if (outcome.feasible) {
                cell.spec_text = outcome.spec_text;
                cell.footprint_bytes = outcome.footprint.total_bytes;
                cell.footprint_kb = outcome.footprint.kb_string();
                cell.val_accuracy = outcome.val_accuracy;
                cell.test_accuracy = evaluate(outcome.predictor, split.test, &report.test_reads);
                ++report.selected_models;
                if (!cfg.out_dir.empty()) {
                    std::string name = family + "_" + std::to_string(budget) + "kb.bin";
                    write_file(cfg.out_dir + "/" + name, outcome.model_bytes);
                }
            }
            report.cells.push_back(std::move(cell));
        }
    }
    if (!cfg.out_dir.empty())
        std::ofstream(cfg.out_dir + "/results.csv") << emit_report(report, ReportFormat::Csv);
    return report;
}

namespace {

std::string acc3(double v) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(3);
    ss << v;
    return ss.str();
}

} // namespace

std::string emit_report(const EvalReport& report, ReportFormat format) {
    // collect row/column labels in first-seen order
    std::vector<std::string> rows;
    std::vector<int> cols;
    for (const EvalCell& c : report.cells) {
        if (std::find(rows.begin(), rows.end(), c.family) == rows.end()) rows.push_back(c.family);
        if (std::find(cols.begin(), cols.end(), c.budget_kb) == cols.end())
            cols.push_back(c.budget_kb);
    }
    std::sort(cols.begin(), cols.end());
    auto find_cell = [&](const std::string& fam, int kb) -> const EvalCell* {
        for (const EvalCell& c : report.cells)
            if (c.family == fam && c.budget_kb == kb) return &c;
        return nullptr;
    };

    if (format == ReportFormat::Csv) {
        std::ostringstream out;
        out << "family,budget_kb,feasible,spec,footprint_bytes,footprint_kb,val_accuracy,"
               "test_accuracy\n";
        for (const EvalCell& c : report.cells) {
            std::string spec = c.spec_text;
            std::replace(spec.begin(), spec.end(), ',', ';');
            out << c.family << "," << c.budget_kb << "," << (c.feasible ? 1 : 0) << "," << spec
                << "," << c.footprint_bytes << "," << c.footprint_kb << ","
                << (c.feasible ? acc3(c.val_accuracy) : "") << ","
                << (c.feasible ? acc3(c.test_accuracy) : "") << "\n";
        }
        return out.str();
    }

    // markdown, Table-7 layout: best test accuracy per column in bold
    std::map<int, std::string> best_for_col;
    for (int kb : cols) {
        double best = -1.0;
        for (const std::string& fam : rows) {
            const EvalCell* c = find_cell(fam, kb);
            if (c && c->feasible && c->test_accuracy > best) {
                best = c->test_accuracy;
                best_for_col[kb] = fam;
            }
        }
    }
    std::ostringstream out;
    out << "| Model |";
    for (int kb : cols) out << " <= " << kb << "KB |";
    out << "\n|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) out << "---|";
    out << "\n";
    for (const std::string& fam : rows) {
        out << "| " << fam << " |";
        for (int kb : cols) {
            const EvalCell* c = find_cell(fam, kb);
            if (!c || !c->feasible) {
                out << " -- |";
            } else {
                std::string cell = acc3(c->test_accuracy) + " [" + c->footprint_kb + "KB]";
                if (best_for_col[kb] == fam) cell = "**" + cell + "**";
                out << " " << cell << " |";
            }
        }
        out << "\n";
    }
    return out.str();
}

EvalReport parse_report_csv(const std::string& text) {
    EvalReport report;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        if (header) {
            MCML_CHECK(line.rfind("family,", 0) == 0, "malformed results csv header");
            header = false;
            continue;
        }
        std::vector<std::string> fields;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        fields.push_back(cur);
        MCML_CHECK(fields.size() == 8, "malformed results csv row: " + line);
        EvalCell c;
        c.family = fields[0];
        c.budget_kb = std::stoi(fields[1]);
        c.feasible = fields[2] == "1";
        c.spec_text = fields[3];
        c.footprint_bytes = std::stoull(fields[4].empty() ? "0" : fields[4]);
        c.footprint_kb = fields[5];
        c.val_accuracy = fields[6].empty() ? 0.0 : std::stod(fields[6]);
        c.test_accuracy = fields[7].empty() ? 0.0 : std::stod(fields[7]);
        report.cells.push_back(std::move(c));
    }
    MCML_CHECK(!header, "malformed results csv: empty");
    return report;
}

std::function<int(const LabeledImage&)> load_predictor(const std::string& path,
                                                       std::string* family_out) {
    std::vector<std::uint8_t> bytes = read_file(path);
    MCML_CHECK(!bytes.empty(), "empty model file: " + path);
    switch (bytes[0]) {
    case 'C': {
        auto model = std::make_shared<CnnModel>(cnn_deserialize(bytes));
        if (family_out) *family_out = "directconv";
        return [model](const LabeledImage& li) {
            std::vector<float> logits = forward_naive(*model, li.image);
            return argmax_lowest(logits);
        };
    }
    case 'P': {
        auto model = std::make_shared<ProtonnModel>(protonn_deserialize(bytes));
        if (family_out) *family_out = "protonn";
        return [model](const LabeledImage& li) { return protonn_predict(*model, li.image.data); };
    }
    case 'B': {
        auto model = std::make_shared<BonsaiModel>(bonsai_deserialize(bytes));
        if (family_out) *family_out = "bonsai";
        return [model](const LabeledImage& li) { return bonsai_predict(*model, li.image.data); };
    }
    case 'F': {
        auto model = std::make_shared<FastGrnnClassifier>(fastgrnn_deserialize(bytes));
        if (family_out) *family_out = std::string("fastgrnn-") + seq_mode_name(model->spec.mode);
        return [model](const LabeledImage& li) { return fastgrnn_predict(*model, li.image); };
    }
    default:
        MCML_CHECK(false, "unknown model family tag in " + path);
        return {};
    }
}

} // namespace mcml
