#include "chd/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "chd/error.hpp"
#include "chd/random.hpp"
#include "chd/text_io.hpp"

namespace chd {

TrainConfig TrainConfig::base_defaults() {
    TrainConfig c;
    c.epochs = 250;
    c.batch_size = 16;
    c.learning_rate = 0.001;
    c.optimizer = OptimizerKind::adam;
    c.loss = LossKind::binary_cross_entropy;
    c.class_weights = ClassWeights{1.0, 5.0};
    c.val_fraction = 0.25;
    return c;
}

TrainConfig TrainConfig::siamese_defaults() {
    TrainConfig c;
    c.epochs = 10;
    c.batch_size = 64;
    c.learning_rate = 0.001;
    c.optimizer = OptimizerKind::rmsprop;
    c.loss = LossKind::contrastive;
    c.val_fraction = 0.25;
    c.margin = kDefaultMargin;
    c.pair_threshold = kDefaultPairThreshold;
    return c;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning rate must be finite and nonnegative");
    }
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (!(pair_threshold > 0.0)) throw ConfigError("pair threshold must be positive");
    if (class_weights && (!(class_weights->w0 >= 0.0) || !(class_weights->w1 >= 0.0))) {
        throw ConfigError("class weights must be nonnegative");
    }
}

NetworkSpec base_network_spec(std::size_t input_width) {
    constexpr double kDropout = 0.175;
    constexpr double kActivityL2 = 0.01;
    return NetworkSpec{{
        {input_width, 256, Activation::relu, kDropout, kActivityL2},
        {256, 256, Activation::relu, kDropout, kActivityL2},
        {256, 1, Activation::sigmoid, kDropout, kActivityL2},
    }};
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct BatchStats {
    double loss_sum = 0.0;
    double penalty_sum = 0.0;
    std::size_t correct = 0;
    std::size_t count = 0;

    double mean_loss() const { return count ? loss_sum / static_cast<double>(count) : kNaN; }
    double mean_penalty() const { return count ? penalty_sum / static_cast<double>(count) : kNaN; }
    double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : kNaN; }
};

void push_epoch(History& h, const BatchStats& train, double val_loss, double val_acc) {
    h.train_loss.push_back(train.mean_loss());
    h.train_acc.push_back(train.accuracy());
    h.train_penalty.push_back(train.mean_penalty());
    h.val_loss.push_back(val_loss);
    h.val_acc.push_back(val_acc);
}

// Unweighted BCE plus the inference-mode activity penalty, per sample.
std::pair<double, double> base_validation(const NetworkSpec& spec, const ParamSet& params, const FeatureTable& val) {
    if (val.rows() == 0) return {kNaN, kNaN};
    Rng unused(0);
    const auto fwd = forward(params, spec, val.features, Mode::infer, unused);
    double loss = fwd.trace.activity_penalty;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < val.rows(); ++i) {
        const double p = fwd.output(i, 0);
        loss += bce_loss(p, val.labels[i]).loss;
        const int predicted = p >= kBaseDecisionThreshold ? 1 : 0;
        if (predicted == val.labels[i]) ++correct;
    }
    const auto n = static_cast<double>(val.rows());
    return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace

BaseTrainResult train_base(const TrainConfig& cfg, const FeatureTable& data, const EpochCallback& on_epoch,
                           const std::optional<NetworkSpec>& spec_override) {
    cfg.validate();
    if (data.rows() == 0) throw ConfigError("training data is empty");
    if (data.count_label(0) == 0 || data.count_label(1) == 0) throw ConfigError("training data has a single class");

    BaseTrainResult result;
    result.spec = spec_override ? *spec_override : base_network_spec(data.width());
    result.spec.validate();
    if (result.spec.input_size() != data.width() || result.spec.output_size() != 1) {
        throw DimensionError("base network must map the feature width to one output");
    }

    FeatureTable fit = data;
    FeatureTable val;
    if (cfg.val_fraction > 0.0) {
        auto split = stratified_split(data, cfg.val_fraction, derive_seed(cfg.seed, "val"));
        fit = std::move(split.kept);
        val = std::move(split.held_out);
    }
    if (fit.rows() == 0) throw ConfigError("no training rows left after the validation split");

    const ClassWeights weights = cfg.class_weights.value_or(ClassWeights{});
    result.initial_params = init_params(result.spec, derive_seed(cfg.seed, "init"));
    result.params = result.initial_params;
    OptimizerState opt = make_optimizer_state(cfg.optimizer, result.params);
    Rng rng(derive_seed(cfg.seed, "train"));

    std::vector<std::size_t> order(fit.rows());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        BatchStats stats;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, end - start);
            const Matrix x = gather_rows(fit.features, batch);
            const double inv_b = 1.0 / static_cast<double>(batch.size());

            auto fwd = forward(result.params, result.spec, x, Mode::train, rng);
            Matrix grad_out(batch.size(), 1);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                const int label = fit.labels[batch[i]];
                const double p = fwd.output(i, 0);
                const auto lg = bce_loss(p, label, weights);
                // Clamped predictions carry no gradient through the clamp.
                const bool clamped = p < kProbabilityClamp || p > 1.0 - kProbabilityClamp;
                grad_out(i, 0) = clamped ? 0.0 : lg.grad * inv_b;
                stats.loss_sum += lg.loss;
                if ((p >= kBaseDecisionThreshold ? 1 : 0) == label) ++stats.correct;
            }
            stats.loss_sum += fwd.trace.activity_penalty;
            stats.penalty_sum += fwd.trace.activity_penalty;
            stats.count += batch.size();

            const auto grads = backward(fwd.trace, result.params, result.spec, grad_out, inv_b).grads;
            optimizer_step(result.params, grads, opt, cfg.learning_rate);
        }
        const auto [val_loss, val_acc] = base_validation(result.spec, result.params, val);
        push_epoch(result.history, stats, val_loss, val_acc);
        if (on_epoch) on_epoch(epoch, result.history);
    }
    return result;
}

namespace {

struct PairBatch {
    Matrix left;
    Matrix right;
    std::vector<bool> similar;
};

PairBatch gather_pairs(const FeatureTable& source, std::span<const SamplePair> pairs,
                       std::span<const std::size_t> order) {
    PairBatch b{Matrix(order.size(), source.width()), Matrix(order.size(), source.width()), {}};
    b.similar.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& p = pairs[order[i]];
        auto l = source.features.row(p.left);
        auto r = source.features.row(p.right);
        std::copy(l.begin(), l.end(), b.left.row(i).begin());
        std::copy(r.begin(), r.end(), b.right.row(i).begin());
        b.similar.push_back(p.similar);
    }
    return b;
}

std::pair<double, double> pair_validation(const SiameseModel& model, const PairSet& val) {
    if (val.empty()) return {kNaN, kNaN};
    const auto d = pair_distances(model, val);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        loss += contrastive_loss(d[i], val.pairs[i].similar, model.margin).loss;
        if ((d[i] < model.pair_threshold) == val.pairs[i].similar) ++correct;
    }
    const auto n = static_cast<double>(d.size());
    return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace

SiameseTrainResult train_siamese(const TrainConfig& cfg, const PairSet& pairs, const EpochCallback& on_epoch,
                                 const std::optional<NetworkSpec>& spec_override) {
    cfg.validate();
    if (pairs.empty()) throw ConfigError("pair set is empty");
    if (!pairs.source) throw ConfigError("pair set has no source table");
    const FeatureTable& source = *pairs.source;

    const NetworkSpec spec = spec_override ? *spec_override : siamese_network_spec(source.width());
    spec.validate();
    if (spec.input_size() != source.width()) throw DimensionError("siamese input width does not match the data");

    PairSet fit = pairs;
    PairSet val{pairs.source, {}, {}};
    if (cfg.val_fraction > 0.0) {
        auto split = split_pairs(pairs, 1.0 - cfg.val_fraction, derive_seed(cfg.seed, "val"));
        fit = std::move(split.train);
        val = std::move(split.test);
    }
    if (fit.empty()) throw ConfigError("no training pairs left after the validation split");

    SiameseTrainResult result;
    result.model = make_siamese_model(spec, derive_seed(cfg.seed, "init"), cfg.margin, cfg.pair_threshold);
    OptimizerState opt = make_optimizer_state(cfg.optimizer, result.model.params);
    Rng rng(derive_seed(cfg.seed, "train"));

    std::vector<std::size_t> order(fit.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        BatchStats stats;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const PairBatch batch = gather_pairs(source, fit.pairs, idx);
            const double inv_b = 1.0 / static_cast<double>(idx.size());

            const auto fwd = pair_forward(result.model, batch.left, batch.right, Mode::train, rng);
            std::vector<double> grad_d(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const auto lg = contrastive_loss(fwd.distances[i], batch.similar[i], cfg.margin);
                grad_d[i] = lg.grad * inv_b;
                stats.loss_sum += lg.loss;
                if ((fwd.distances[i] < cfg.pair_threshold) == batch.similar[i]) ++stats.correct;
            }
            const double penalty = fwd.left_trace.activity_penalty + fwd.right_trace.activity_penalty;
            stats.loss_sum += penalty;
            stats.penalty_sum += penalty;
            stats.count += idx.size();

            const auto grads = pair_backward(result.model, fwd, grad_d, inv_b);
            optimizer_step(result.model.params, grads, opt, cfg.learning_rate);
        }
        const auto [val_loss, val_acc] = pair_validation(result.model, val);
        push_epoch(result.history, stats, val_loss, val_acc);
        if (on_epoch) on_epoch(epoch, result.history);
    }
    return result;
}

EvalReport make_report(const ConfusionMatrix& cm) {
    auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    EvalReport r;
    r.matrix = cm;
    const auto& c = cm.cells;
    r.accuracy = ratio(c[0][0] + c[1][1], cm.total());
    for (int k = 0; k < 2; ++k) {
        r.precision[k] = ratio(c[k][k], c[0][k] + c[1][k]);
        r.recall[k] = ratio(c[k][k], c[k][0] + c[k][1]);
    }
    return r;
}

EvalReport evaluate_predictions(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) throw DimensionError("prediction/truth length mismatch");
    if (predicted.empty()) throw ConfigError("nothing to evaluate");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if ((truth[i] != 0 && truth[i] != 1) || (predicted[i] != 0 && predicted[i] != 1)) {
            throw ConfigError("labels must be 0 or 1");
        }
        cm.add(truth[i], predicted[i]);
    }
    return make_report(cm);
}

EvalReport evaluate_classifier(const NetworkSpec& spec, const ParamSet& params, const FeatureTable& data) {
    if (data.rows() == 0) throw ConfigError("nothing to evaluate");
    const Matrix out = predict(params, spec, data.features);
    std::vector<int> predicted(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) predicted[i] = out(i, 0) >= kBaseDecisionThreshold ? 1 : 0;
    return evaluate_predictions(predicted, data.labels);
}

EvalReport evaluate_classifier(const SiameseModel& model, const ReferenceBank& bank, const FeatureTable& data,
                               Aggregator agg) {
    if (data.rows() == 0) throw ConfigError("nothing to evaluate");
    const auto verdicts = classify_batch(model, bank, data.features, agg);
    std::vector<int> predicted;
    predicted.reserve(verdicts.size());
    for (const auto& v : verdicts) predicted.push_back(v.label);
    return evaluate_predictions(predicted, data.labels);
}

std::vector<double> pair_distances(const SiameseModel& model, const PairSet& pairs) {
    if (!pairs.source) throw ConfigError("pair set has no source table");
    // Embed each referenced row once.
    const Matrix embedded = predict(model.params, model.spec, pairs.source->features);
    std::vector<double> d;
    d.reserve(pairs.size());
    for (const auto& p : pairs.pairs) {
        d.push_back(euclidean_distance(embedded.row(p.left), embedded.row(p.right)).distance);
    }
    return d;
}

EvalReport evaluate_pairs(const SiameseModel& model, const PairSet& pairs) {
    if (pairs.empty()) throw ConfigError("nothing to evaluate");
    const auto d = pair_distances(model, pairs);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < d.size(); ++i) {
        cm.add(pairs.pairs[i].similar ? 1 : 0, d[i] < model.pair_threshold ? 1 : 0);
    }
    return make_report(cm);
}

void export_history(const History& h, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (std::size_t e = 0; e < h.epochs(); ++e) {
        out << (e + 1) << ',' << text::format_double(h.train_loss[e]) << ',' << text::format_double(h.train_acc[e])
            << ',' << text::format_double(h.val_loss[e]) << ',' << text::format_double(h.val_acc[e]) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

History read_history(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("file not found: " + path.string());
    std::string line;
    if (!std::getline(in, line) || text::trim(line) != "epoch,train_loss,train_acc,val_loss,val_acc") {
        throw SchemaError("bad history header in " + path.string());
    }
    History h;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        const auto cells = text::split(line);
        if (cells.size() != 5) throw SchemaError("history row needs 5 cells");
        std::array<double, 5> v{};
        for (std::size_t c = 0; c < 5; ++c) {
            const auto parsed = cells[c] == "nan" ? std::optional<double>(kNaN) : text::parse_double(cells[c]);
            if (!parsed) throw SchemaError("bad history value '" + std::string(cells[c]) + "'");
            v[c] = *parsed;
        }
        h.train_loss.push_back(v[1]);
        h.train_acc.push_back(v[2]);
        h.val_loss.push_back(v[3]);
        h.val_acc.push_back(v[4]);
        h.train_penalty.push_back(kNaN);
    }
    return h;
}

void write_report_text(std::ostream& out, const std::string& title, const EvalReport& r) {
    const auto& c = r.matrix.cells;
    out << title << '\n';
    out << "  confusion matrix (rows = true, cols = predicted):\n";
    out << "    [[" << c[0][0] << ", " << c[0][1] << "],\n";
    out << "     [" << c[1][0] << ", " << c[1][1] << "]]\n";
    out << "  evaluated:        " << r.matrix.total() << '\n';
    out << "  accuracy:         " << text::format_double(r.accuracy) << '\n';
    out << "  precision class 0: " << text::format_double(r.precision[0]) << '\n';
    out << "  precision class 1: " << text::format_double(r.precision[1]) << '\n';
    out << "  recall class 0:    " << text::format_double(r.recall[0]) << '\n';
    out << "  recall class 1:    " << text::format_double(r.recall[1]) << '\n';
}

void write_report_kv(std::ostream& out, const std::string& prefix, const EvalReport& r) {
    const auto& c = r.matrix.cells;
    out << prefix << ".tn=" << c[0][0] << '\n';
    out << prefix << ".fp=" << c[0][1] << '\n';
    out << prefix << ".fn=" << c[1][0] << '\n';
    out << prefix << ".tp=" << c[1][1] << '\n';
    out << prefix << ".total=" << r.matrix.total() << '\n';
    out << prefix << ".accuracy=" << text::format_double(r.accuracy) << '\n';
    out << prefix << ".precision0=" << text::format_double(r.precision[0]) << '\n';
    out << prefix << ".precision1=" << text::format_double(r.precision[1]) << '\n';
    out << prefix << ".recall0=" << text::format_double(r.recall[0]) << '\n';
    out << prefix << ".recall1=" << text::format_double(r.recall[1]) << '\n';
}

}  // namespace chd
