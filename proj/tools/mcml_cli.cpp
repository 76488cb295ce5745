// mcml: memory-constrained image classifiers. Verbs: sizes, search, train,
// eval, report. Exit codes: 0 success (including benign "no feasible
// model"), 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mcml/bonsai.hpp"
#include "mcml/cnn_inplace.hpp"
#include "mcml/cnn_train.hpp"
#include "mcml/fastgrnn.hpp"
#include "mcml/harness.hpp"
#include "mcml/mathutil.hpp"
#include "mcml/protonn.hpp"
#include "mcml/serialize.hpp"

using namespace mcml;

namespace {

struct DataFlags {
    std::string data_dir;
    bool synthetic = false;
    bool standardize = false;
    int synthetic_per_class = 1000;
    std::uint64_t seed = 42;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
    const char* env = std::getenv("MCML_DATA_DIR");
    if (env) f.data_dir = env;
    cmd->add_option("--data-dir", f.data_dir,
                    "directory with the CIFAR-10 binary batches (default $MCML_DATA_DIR)");
    cmd->add_flag("--synthetic", f.synthetic,
                  "use a generated CIFAR-shaped dataset instead of --data-dir");
    cmd->add_option("--synthetic-per-class", f.synthetic_per_class,
                    "train images per class for --synthetic");
    cmd->add_flag("--standardize", f.standardize,
                  "per-channel standardization from train statistics (default off)");
    cmd->add_option("--seed", f.seed, "random seed");
}

DatasetSplit load_split(const DataFlags& f) {
    Dataset train, test;
    if (f.synthetic) {
        train = make_synthetic_images(f.synthetic_per_class, f.seed ^ 0x5157ULL);
        test = make_synthetic_images(std::max(1, f.synthetic_per_class / 5), f.seed ^ 0x7e57ULL);
    } else {
        MCML_CHECK(!f.data_dir.empty(), "no --data-dir given (and --synthetic not set)");
        auto [tr, te] = load_cifar10(f.data_dir);
        train = std::move(tr);
        test = std::move(te);
    }
    int per_class = static_cast<int>(train.size() / (kNumClasses * 5));
    DatasetSplit split = stratified_holdout(train, f.synthetic ? per_class : 1000, f.seed);
    split.test = std::move(test);
    if (f.standardize) standardize_split(split);
    return split;
}

int cmd_sizes(const std::string& family, const std::string& arch_text, const std::string& mode,
              int hidden, double dw, double du, int depth, int dim, int d, int m, double rho) {
    Footprint f;
    if (family == "fastgrnn") {
        f = fastgrnn_footprint({seq_mode_from_name(mode), hidden, dw, du});
    } else if (family == "bonsai") {
        f = bonsai_footprint({depth, dim});
    } else if (family == "protonn") {
        f = protonn_footprint(d, m, rho);
    } else if (family == "directconv") {
        f = cnn_footprint(parse_arch(arch_text));
    } else {
        MCML_CHECK(false, "unknown family: " + family);
    }
    std::cout << f.total_bytes << " B (" << f.kb_string() << "KB)\n";
    return 0;
}

int run_config_experiment(const std::string& config_path) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    DataFlags f;
    f.data_dir = cfg.data_dir;
    f.synthetic = cfg.data_dir.empty() || cfg.data_dir == "synthetic";
    f.seed = cfg.seed;
    DatasetSplit split = load_split(f);
    EvalReport report = run_experiment(cfg, split);
    std::cout << emit_report(report, ReportFormat::Markdown);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"memory-constrained image classifiers on CIFAR-10"};
    app.require_subcommand(1);

    // sizes
    auto* sizes = app.add_subcommand("sizes", "print a model spec's footprint");
    std::string family, arch_text, mode = "row";
    int hidden = 0, depth = 1, dim = 1, d = 0, m = 0;
    double dw = 1.0, du = 1.0, rho = 1.0;
    sizes->add_option("--family", family, "directconv|protonn|bonsai|fastgrnn")->required();
    sizes->add_option("--arch", arch_text, "directconv arch text, e.g. A,C1(6,3),M,Dr,D*");
    sizes->add_option("--mode", mode, "fastgrnn sequencing: row|channel|multi");
    sizes->add_option("--hidden", hidden, "fastgrnn hidden dim");
    sizes->add_option("--dw", dw, "fastgrnn W density");
    sizes->add_option("--du", du, "fastgrnn U density");
    sizes->add_option("--depth", depth, "bonsai tree depth");
    sizes->add_option("--dim", dim, "bonsai projection dim");
    sizes->add_option("--d", d, "protonn projection dim");
    sizes->add_option("--m", m, "protonn prototype count");
    sizes->add_option("--rho", rho, "protonn W density");

    // search
    auto* search = app.add_subcommand("search", "budget-constrained model search");
    std::string s_family, s_out, s_scale = "desk", s_config;
    int s_budget = 0;
    DataFlags s_data;
    search->add_option("--config", s_config, "experiment config file (runs every family in it)");
    search->add_option("--family", s_family,
                       "directconv|protonn|bonsai|fastgrnn-row|-channel|-multi");
    search->add_option("--budget", s_budget, "budget in KB: 8/16/32/64/128");
    search->add_option("--scale", s_scale, "desk|full");
    search->add_option("--out", s_out, "output directory for the model file and csv row");
    add_data_flags(search, s_data);

    // train
    auto* train = app.add_subcommand("train", "train one spec and serialize the model");
    std::string t_family, t_arch, t_mode = "row", t_out = "model.bin", t_scale = "desk";
    int t_hidden = 0, t_depth = 1, t_dim = 1, t_d = 0, t_m = 0, t_epochs = 0;
    double t_dw = 1.0, t_du = 1.0, t_rho = 1.0, t_gamma = 0.015, t_lr = 0.0;
    DataFlags t_data;
    train->add_option("--family", t_family)->required();
    train->add_option("--arch", t_arch, "directconv arch text");
    train->add_option("--mode", t_mode, "fastgrnn sequencing mode");
    train->add_option("--hidden", t_hidden);
    train->add_option("--dw", t_dw);
    train->add_option("--du", t_du);
    train->add_option("--depth", t_depth);
    train->add_option("--dim", t_dim);
    train->add_option("--d", t_d);
    train->add_option("--m", t_m);
    train->add_option("--rho", t_rho);
    train->add_option("--gamma", t_gamma, "protonn kernel width");
    train->add_option("--lr", t_lr, "learning rate override");
    train->add_option("--epochs", t_epochs, "epoch override (0 = family default)");
    train->add_option("--scale", t_scale, "desk|full");
    train->add_option("--out", t_out, "model file to write");
    add_data_flags(train, t_data);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a serialized model");
    std::string e_model, e_split = "test";
    DataFlags e_data;
    eval->add_option("--model", e_model, "model file")->required();
    eval->add_option("--split", e_split, "test|val|train");
    add_data_flags(eval, e_data);

    // report
    auto* report = app.add_subcommand("report", "render a results csv as a comparison table");
    std::string r_in, r_format = "md";
    report->add_option("--in", r_in, "results csv")->required();
    report->add_option("--format", r_format, "md|csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
            app.exit(e);
            return 0;
        }
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (*sizes)
            return cmd_sizes(family, arch_text, mode, hidden, dw, du, depth, dim, d, m, rho);

        if (*search) {
            if (!s_config.empty()) return run_config_experiment(s_config);
            MCML_CHECK(!s_family.empty() && s_budget > 0,
                       "search needs --config, or --family and --budget");
            MCML_CHECK(is_standard_budget(s_budget), "budget must be one of 8/16/32/64/128");
            ExperimentConfig cfg;
            cfg.families = {s_family};
            cfg.budgets = {s_budget};
            cfg.seed = s_data.seed;
            cfg.scale = s_scale;
            cfg.out_dir = s_out;
            DatasetSplit split = load_split(s_data);
            EvalReport rep = run_experiment(cfg, split);
            const EvalCell& cell = rep.cells.at(0);
            if (!cell.feasible) {
                std::cout << cell.family << " <=" << s_budget << "KB: no feasible model\n";
                return 0;
            }
            std::cout << cell.family << " <=" << s_budget << "KB: " << cell.spec_text << "  "
                      << cell.footprint_kb << "KB  val " << cell.val_accuracy << "  test "
                      << cell.test_accuracy << "\n";
            return 0;
        }

        if (*train) {
            DatasetSplit split = load_split(t_data);
            DatasetSplit work = split;
            if (t_scale == "desk") {
                work.train = stratified_subset(split.train, 500, t_data.seed ^ 0xdecaf);
            }
            std::vector<std::uint8_t> bytes;
            if (t_family == "directconv") {
                Rng rng(t_data.seed);
                CnnModel model = init_cnn(parse_arch(t_arch), rng);
                CnnTrainOptions opt;
                opt.seed = t_data.seed;
                if (t_epochs > 0) opt.epochs = t_epochs;
                if (t_lr > 0) opt.lr_init = static_cast<float>(t_lr);
                CnnTrainResult r = train_cnn(std::move(model), work, opt);
                std::cout << "val accuracy " << r.best_val_accuracy << "\n";
                bytes = cnn_serialize(r.model);
            } else if (t_family == "protonn") {
                LabeledVectors tr = to_vectors(work.train), va = to_vectors(work.validation);
                ProtonnTrainOptions opt;
                opt.seed = t_data.seed;
                if (t_epochs > 0) opt.epochs = t_epochs;
                ProtonnTrainResult r =
                    protonn_train(tr, va, t_d, t_m, t_rho, static_cast<float>(t_gamma),
                                  t_lr > 0 ? static_cast<float>(t_lr) : 0.01f, opt);
                std::cout << "val accuracy " << r.best_val_accuracy << "\n";
                bytes = protonn_serialize(r.model);
            } else if (t_family == "bonsai") {
                LabeledVectors tr = to_vectors(work.train), va = to_vectors(work.validation);
                BonsaiTrainOptions opt;
                opt.seed = t_data.seed;
                if (t_epochs > 0) opt.epochs = t_epochs;
                if (t_lr > 0) opt.lr = static_cast<float>(t_lr);
                BonsaiTrainResult r = bonsai_train(tr, va, {t_depth, t_dim}, opt);
                std::cout << "val accuracy " << r.best_val_accuracy << "\n";
                bytes = bonsai_serialize(r.best_model);
            } else if (t_family == "fastgrnn") {
                FastGrnnSpec spec{seq_mode_from_name(t_mode), t_hidden, t_dw, t_du};
                FastGrnnTrainOptions opt;
                opt.seed = t_data.seed;
                if (t_epochs > 0) opt.epochs = t_epochs;
                if (t_lr > 0) opt.lr = static_cast<float>(t_lr);
                FastGrnnTrainResult r = fastgrnn_train(work, spec, opt);
                std::cout << "val accuracy " << r.best_val_accuracy << "\n";
                bytes = fastgrnn_serialize(r.model);
            } else {
                MCML_CHECK(false, "unknown family: " + t_family);
            }
            write_file(t_out, bytes);
            std::cout << "wrote " << t_out << " (" << bytes.size() << " bytes)\n";
            return 0;
        }

        if (*eval) {
            DatasetSplit split = load_split(e_data);
            const Dataset& data = e_split == "test"    ? split.test
                                  : e_split == "train" ? split.train
                                                       : split.validation;
            std::string fam;
            auto predict = load_predictor(e_model, &fam);
            double acc = evaluate(predict, data);
            std::cout << fam << " " << e_split << " accuracy " << acc << "\n";
            return 0;
        }

        if (*report) {
            std::ifstream in(r_in);
            MCML_CHECK(in.good(), "cannot open: " + r_in);
            std::stringstream ss;
            ss << in.rdbuf();
            EvalReport rep;
            try {
                rep = parse_report_csv(ss.str());
            } catch (const Error& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
            std::cout << emit_report(rep, r_format == "csv" ? ReportFormat::Csv
                                                            : ReportFormat::Markdown);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
