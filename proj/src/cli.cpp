#include "chd/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "chd/data_pipeline.hpp"
#include "chd/error.hpp"
#include "chd/pair_generation.hpp"
#include "chd/random.hpp"
#include "chd/siamese_model.hpp"
#include "chd/text_io.hpp"
#include "chd/train_eval.hpp"

namespace chd::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kTestFraction = 0.2;

// Artifact names inside the output directory.
constexpr const char* kPrepared = "prepared.csv";
constexpr const char* kNormStats = "norm_stats.csv";
constexpr const char* kSplit = "split.csv";
constexpr const char* kDataReport = "data_report.txt";
constexpr const char* kPairsTrain = "pairs_train.csv";
constexpr const char* kPairsTest = "pairs_test.csv";
constexpr const char* kBaseModel = "base_model.txt";
constexpr const char* kSiameseModel = "siamese_model.txt";

struct RunConfig {
    std::string data;
    std::string synthetic;
    std::string out = "out";
    std::uint64_t seed = 42;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr;
    std::optional<double> margin;
    std::optional<double> threshold;
    std::size_t k_refs = kDefaultReferencesPerClass;
    std::size_t pairs_diff = kDefaultPairCounts.diff;
    std::size_t pairs_same0 = kDefaultPairCounts.same0;
    std::size_t pairs_same1 = kDefaultPairCounts.same1;
    std::string aggregator = "mean";
    std::string which;
};

struct SyntheticSpec {
    std::size_t n = 0;
    std::size_t d = 0;
    double imbalance = 0.0;
};

SyntheticSpec parse_synthetic(const std::string& s) {
    const auto parts = text::split(s);
    if (parts.size() != 3) throw ConfigError("--synthetic expects n,d,imbalance");
    const auto n = text::parse_double(parts[0]);
    const auto d = text::parse_double(parts[1]);
    const auto imb = text::parse_double(parts[2]);
    if (!n || !d || !imb || *n < 2 || *d < 1 || *n != std::floor(*n) || *d != std::floor(*d)) {
        throw ConfigError("--synthetic expects integer n >= 2, integer d >= 1 and a ratio");
    }
    return {static_cast<std::size_t>(*n), static_cast<std::size_t>(*d), *imb};
}

Aggregator parse_aggregator(const std::string& s) {
    if (s == "mean") return Aggregator::mean;
    if (s == "min") return Aggregator::min;
    throw ConfigError("--aggregator must be mean or min");
}

fs::path out_path(const RunConfig& cfg, const char* name) { return fs::path(cfg.out) / name; }

void require(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) throw IoError("missing " + p.string() + " (" + hint + ")");
}

TrainConfig train_config(const RunConfig& cfg, const std::string& which) {
    TrainConfig tc = which == "base" ? TrainConfig::base_defaults() : TrainConfig::siamese_defaults();
    if (cfg.epochs) tc.epochs = *cfg.epochs;
    if (cfg.batch_size) tc.batch_size = *cfg.batch_size;
    if (cfg.lr) tc.learning_rate = *cfg.lr;
    if (cfg.margin) tc.margin = *cfg.margin;
    if (cfg.threshold) tc.pair_threshold = *cfg.threshold;
    tc.seed = derive_seed(cfg.seed, "train-" + which);
    tc.validate();
    return tc;
}

std::string effective_config(const RunConfig& cfg, const std::string& command,
                             const std::optional<TrainConfig>& tc = std::nullopt) {
    std::ostringstream s;
    s << "command=" << command << '\n';
    s << "seed=" << cfg.seed << '\n';
    if (!cfg.synthetic.empty()) {
        s << "synthetic=" << cfg.synthetic << '\n';
    } else {
        s << "data=" << cfg.data << '\n';
    }
    s << "pairs-diff=" << cfg.pairs_diff << '\n';
    s << "pairs-same0=" << cfg.pairs_same0 << '\n';
    s << "pairs-same1=" << cfg.pairs_same1 << '\n';
    s << "k-refs=" << cfg.k_refs << '\n';
    s << "aggregator=" << cfg.aggregator << '\n';
    if (tc) {
        s << "epochs=" << tc->epochs << '\n';
        s << "batch-size=" << tc->batch_size << '\n';
        s << "lr=" << text::format_double(tc->learning_rate) << '\n';
        s << "optimizer=" << to_string(tc->optimizer) << '\n';
        s << "val-fraction=" << text::format_double(tc->val_fraction) << '\n';
        if (tc->class_weights) {
            s << "class-weights=" << text::format_double(tc->class_weights->w0) << ','
              << text::format_double(tc->class_weights->w1) << '\n';
        }
        s << "margin=" << text::format_double(tc->margin) << '\n';
        s << "threshold=" << text::format_double(tc->pair_threshold) << '\n';
    }
    return s.str();
}

void print_config(std::ostream& out, const std::string& block) {
    out << "effective config:\n";
    std::istringstream in(block);
    std::string line;
    while (std::getline(in, line)) out << "  " << line << '\n';
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream f(p);
    if (!f) throw IoError("cannot write " + p.string());
    f << body;
    if (!f) throw IoError("write failed: " + p.string());
}

// ---------------------------------------------------------------------------
// split manifest: row,part with part in {train,test}

void save_split(const SplitResult& split, const fs::path& p) {
    std::vector<const char*> part(split.kept_indices.size() + split.held_out_indices.size());
    for (auto i : split.kept_indices) part[i] = "train";
    for (auto i : split.held_out_indices) part[i] = "test";
    std::ostringstream s;
    s << "row,part\n";
    for (std::size_t i = 0; i < part.size(); ++i) s << i << ',' << part[i] << '\n';
    write_text(p, s.str());
}

struct SplitRows {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

SplitRows load_split(const fs::path& p, std::size_t rows) {
    std::ifstream in(p);
    if (!in) throw IoError("file not found: " + p.string());
    std::string line;
    if (!std::getline(in, line) || text::trim(line) != "row,part") throw SchemaError("bad split manifest header");
    SplitRows s;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(line);
        const auto idx = cells.size() == 2 ? text::parse_double(cells[0]) : std::nullopt;
        if (!idx || *idx < 0 || *idx >= static_cast<double>(rows)) throw SchemaError("bad split manifest row");
        const auto row = static_cast<std::size_t>(*idx);
        if (cells[1] == "train") {
            s.train.push_back(row);
        } else if (cells[1] == "test") {
            s.test.push_back(row);
        } else {
            throw SchemaError("unknown split part '" + std::string(cells[1]) + "'");
        }
    }
    if (s.train.size() + s.test.size() != rows) throw SchemaError("split manifest does not cover the table");
    return s;
}

// ---------------------------------------------------------------------------

int cmd_prepare(const RunConfig& cfg, std::ostream& out) {
    if (cfg.data.empty() == cfg.synthetic.empty()) throw ConfigError("prepare needs exactly one of --data or --synthetic");
    fs::create_directories(cfg.out);
    const std::string config = effective_config(cfg, "prepare");
    print_config(out, config);

    std::ostringstream report;
    FeatureTable ft;
    if (!cfg.synthetic.empty()) {
        const auto syn = parse_synthetic(cfg.synthetic);
        ft = synth_generate(syn.n, syn.d, syn.imbalance, derive_seed(cfg.seed, "synthetic"));
        report << "rows: " << ft.rows() << '\n';
        report << "columns: " << ft.width() + 1 << '\n';
        report << "missing values:\n";
        for (const auto& c : ft.schema) report << "  " << c.name << ": 0\n";
        report << "  " << ft.label_name << ": 0\n";
        report << "missing total: 0\n";
    } else {
        const RawTable raw = load_csv(cfg.data, framingham_schema());
        report << "rows: " << raw.row_count() << '\n';
        report << "columns: " << raw.column_count() << '\n';
        report << "missing values:\n";
        for (std::size_t c = 0; c < raw.column_count(); ++c) {
            report << "  " << raw.schema[c].name << " (" << to_string(raw.schema[c].kind)
                   << (raw.schema[c].is_label ? ", label" : "") << "): " << raw.missing_count(c) << '\n';
        }
        report << "missing total: " << raw.missing_total() << '\n';
        ft = to_features(impute(raw));
    }
    report << "class 0: " << ft.count_label(0) << '\n';
    report << "class 1: " << ft.count_label(1) << '\n';

    const NormStats stats = fit_norm(ft);
    const FeatureTable normalized = apply_norm(ft, stats);
    const SplitResult split = stratified_split(normalized, kTestFraction, derive_seed(cfg.seed, "test-split"));
    report << "train rows: " << split.kept_indices.size() << '\n';
    report << "test rows: " << split.held_out_indices.size() << '\n';

    save_feature_table(normalized, out_path(cfg, kPrepared));
    save_norm_stats(stats, ft.schema, out_path(cfg, kNormStats));
    save_split(split, out_path(cfg, kSplit));
    write_text(out_path(cfg, kDataReport), report.str());
    out << "data report:\n" << report.str();
    return 0;
}

std::shared_ptr<const FeatureTable> load_prepared(const RunConfig& cfg) {
    const auto p = out_path(cfg, kPrepared);
    require(p, "run `prepare` first");
    return std::make_shared<const FeatureTable>(load_feature_table(p));
}

int cmd_pairs(const RunConfig& cfg, std::ostream& out) {
    const auto table = load_prepared(cfg);
    const std::string config = effective_config(cfg, "pairs");
    print_config(out, config);

    const PairCounts counts{cfg.pairs_diff, cfg.pairs_same0, cfg.pairs_same1};
    const PairSet all = generate_pairs(table, counts, derive_seed(cfg.seed, "pairs"));
    const PairSplit split = split_pairs(all, kDefaultPairTrainFraction, derive_seed(cfg.seed, "pair-split"));
    save_pairs(split.train, out_path(cfg, kPairsTrain));
    save_pairs(split.test, out_path(cfg, kPairsTest));
    out << "pairs: " << all.size() << " (cross-class " << counts.diff << ", class-0 " << counts.same0
        << ", class-1 " << counts.same1 << ")\n";
    out << "train pairs: " << split.train.size() << '\n';
    out << "test pairs: " << split.test.size() << '\n';
    return 0;
}

void stream_epoch(std::ostream& out, std::size_t epoch, std::size_t total, const History& h) {
    const std::size_t e = epoch - 1;
    out << "epoch " << epoch << '/' << total << "  loss " << std::setprecision(6) << h.train_loss[e]
        << " (activity " << h.train_penalty[e] << ")  acc " << h.train_acc[e] << "  val_loss " << h.val_loss[e]
        << "  val_acc " << h.val_acc[e] << '\n'
        << std::flush;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    const auto table = load_prepared(cfg);
    const TrainConfig tc = train_config(cfg, cfg.which);
    print_config(out, effective_config(cfg, "train " + cfg.which, tc));
    const auto split_path = out_path(cfg, kSplit);
    require(split_path, "run `prepare` first");
    const SplitRows rows = load_split(split_path, table->rows());
    const FeatureTable train_rows = select_rows(*table, rows.train);
    const auto on_epoch = [&](std::size_t epoch, const History& h) { stream_epoch(out, epoch, tc.epochs, h); };

    if (cfg.which == "base") {
        const auto result = train_base(tc, train_rows, on_epoch);
        save_network(out_path(cfg, kBaseModel), result.spec, result.params);
        export_history(result.history, out_path(cfg, "history_base.csv"));
    } else {
        const auto pairs_path = out_path(cfg, kPairsTrain);
        require(pairs_path, "run `pairs` first");
        const PairSet pairs = load_pairs(table, pairs_path);
        const auto result = train_siamese(tc, pairs, on_epoch);
        const ReferenceBank bank = build_reference_bank(train_rows, cfg.k_refs, derive_seed(cfg.seed, "bank"));
        save_siamese(out_path(cfg, kSiameseModel), result.model, &bank);
        export_history(result.history, out_path(cfg, "history_siamese.csv"));
    }
    out << "wrote " << (cfg.which == "base" ? kBaseModel : kSiameseModel) << " and history_" << cfg.which
        << ".csv\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    const auto table = load_prepared(cfg);
    const auto split_path = out_path(cfg, kSplit);
    require(split_path, "run `prepare` first");
    const SplitRows rows = load_split(split_path, table->rows());
    const FeatureTable train_rows = select_rows(*table, rows.train);
    const FeatureTable test_rows = select_rows(*table, rows.test);

    const std::string config = effective_config(cfg, "eval " + cfg.which);
    print_config(out, config);
    std::ostringstream txt;
    std::ostringstream kv;
    txt << "seed: " << cfg.seed << "\n\n";
    kv << "seed=" << cfg.seed << '\n';

    if (cfg.which == "base") {
        const auto model_path = out_path(cfg, kBaseModel);
        require(model_path, "run `train base` first");
        const auto [spec, params] = load_network(model_path);
        const EvalReport train_report = evaluate_classifier(spec, params, train_rows);
        const EvalReport test_report = evaluate_classifier(spec, params, test_rows);
        write_report_text(txt, "base network, training samples", train_report);
        write_report_text(txt, "base network, test samples", test_report);
        write_report_kv(kv, "train", train_report);
        write_report_kv(kv, "test", test_report);
    } else {
        const auto model_path = out_path(cfg, kSiameseModel);
        require(model_path, "run `train siamese` first");
        auto ckpt = load_siamese(model_path);
        if (cfg.threshold) ckpt.model.pair_threshold = *cfg.threshold;
        if (ckpt.bank.k() == 0) throw ConfigError("siamese checkpoint carries no reference bank");
        require(out_path(cfg, kPairsTest), "run `pairs` first");
        const PairSet test_pairs = load_pairs(table, out_path(cfg, kPairsTest));
        const PairSet train_pairs = load_pairs(table, out_path(cfg, kPairsTrain));
        const Aggregator agg = parse_aggregator(cfg.aggregator);

        const EvalReport pair_train = evaluate_pairs(ckpt.model, train_pairs);
        const EvalReport pair_test = evaluate_pairs(ckpt.model, test_pairs);
        const EvalReport sample_test = evaluate_classifier(ckpt.model, ckpt.bank, test_rows, agg);
        txt << "pair threshold: " << text::format_double(ckpt.model.pair_threshold) << "\n\n";
        write_report_text(txt, "siamese pair-level, training pairs (positive = similar)", pair_train);
        write_report_text(txt, "siamese pair-level, test pairs (positive = similar)", pair_test);
        write_report_text(txt, "siamese sample-level via reference bank, test samples", sample_test);
        kv << "pair_threshold=" << text::format_double(ckpt.model.pair_threshold) << '\n';
        write_report_kv(kv, "pair_train", pair_train);
        write_report_kv(kv, "pair_test", pair_test);
        write_report_kv(kv, "sample_test", sample_test);
    }
    const std::string stem = "report_" + cfg.which;
    write_text(out_path(cfg, (stem + ".txt").c_str()), txt.str());
    write_text(out_path(cfg, (stem + ".kv").c_str()), kv.str());
    out << txt.str();
    return 0;
}

int cmd_export(const RunConfig& cfg, std::ostream& out) {
    std::size_t written = 0;
    for (const std::string which : {"base", "siamese"}) {
        const auto hist_path = fs::path(cfg.out) / ("history_" + which + ".csv");
        if (!fs::exists(hist_path)) continue;
        const History h = read_history(hist_path);
        std::ostringstream acc;
        std::ostringstream loss;
        acc << "epoch,train,validation\n";
        loss << "epoch,train,validation\n";
        for (std::size_t e = 0; e < h.epochs(); ++e) {
            acc << e + 1 << ',' << text::format_double(h.train_acc[e]) << ',' << text::format_double(h.val_acc[e])
                << '\n';
            loss << e + 1 << ',' << text::format_double(h.train_loss[e]) << ','
                 << text::format_double(h.val_loss[e]) << '\n';
        }
        write_text(fs::path(cfg.out) / ("curve_" + which + "_accuracy.csv"), acc.str());
        write_text(fs::path(cfg.out) / ("curve_" + which + "_loss.csv"), loss.str());
        out << "exported accuracy and loss curves for " << which << '\n';
        ++written;
    }
    if (written == 0) throw IoError("no history files in " + cfg.out + " (run `train` first)");
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Siamese-network and baseline classifiers for imbalanced binary health data", "chd"};
    app.fallthrough();
    app.require_subcommand(1);
    app.set_config("--config", "", "Flat key=value file; keys are flag names");
    // keep "synthetic=n,d,imbalance" as one value
    app.get_config_formatter_base()->arrayDelimiter(';');

    RunConfig cfg;
    app.add_option("--data", cfg.data, "Framingham CSV");
    app.add_option("--synthetic", cfg.synthetic, "Synthetic data as n,d,imbalance");
    app.add_option("--out", cfg.out, "Artifact directory")->capture_default_str();
    app.add_option("--seed", cfg.seed, "Root seed")->capture_default_str();
    app.add_option("--epochs", cfg.epochs, "Training epochs");
    app.add_option("--batch-size", cfg.batch_size, "Mini-batch size");
    app.add_option("--lr", cfg.lr, "Learning rate");
    app.add_option("--margin", cfg.margin, "Contrastive margin");
    app.add_option("--threshold", cfg.threshold, "Pair distance threshold");
    app.add_option("--k-refs", cfg.k_refs, "Reference samples per class")->capture_default_str();
    app.add_option("--pairs-diff", cfg.pairs_diff, "Cross-class pairs")->capture_default_str();
    app.add_option("--pairs-same0", cfg.pairs_same0, "Class-0 pairs")->capture_default_str();
    app.add_option("--pairs-same1", cfg.pairs_same1, "Class-1 pairs")->capture_default_str();
    app.add_option("--aggregator", cfg.aggregator, "Reference distance aggregator: mean or min")
        ->capture_default_str();

    auto* prepare = app.add_subcommand("prepare", "Load, impute, normalize and split the dataset");
    auto* pairs = app.add_subcommand("pairs", "Generate the train/test pair corpus");
    auto* train = app.add_subcommand("train", "Train a model");
    train->add_option("model", cfg.which, "base or siamese")->required()->check(CLI::IsMember({"base", "siamese"}));
    auto* eval = app.add_subcommand("eval", "Evaluate a trained model");
    eval->add_option("model", cfg.which, "base or siamese")->required()->check(CLI::IsMember({"base", "siamese"}));
    auto* exp = app.add_subcommand("export", "Write accuracy/loss curve data from training histories");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(cfg, out);
        if (pairs->parsed()) return cmd_pairs(cfg, out);
        if (train->parsed()) return cmd_train(cfg, out);
        if (eval->parsed()) return cmd_eval(cfg, out);
        if (exp->parsed()) return cmd_export(cfg, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace chd::cli
