#include "chd/siamese_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "chd/error.hpp"
#include "chd/text_io.hpp"

namespace chd {

NetworkSpec siamese_network_spec(std::size_t input_width) {
    return NetworkSpec{{
        {input_width, 256, Activation::relu, 0.2, 0.0},
        {256, 256, Activation::relu, 0.2, 0.0},
        {256, 256, Activation::relu, 0.0, 0.0},
    }};
}

SiameseModel make_siamese_model(const NetworkSpec& spec, std::uint64_t seed, double margin, double pair_threshold) {
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (!(pair_threshold > 0.0)) throw ConfigError("pair threshold must be positive");
    return SiameseModel{spec, init_params(spec, seed), margin, pair_threshold};
}

PairForward pair_forward(const SiameseModel& model, const Matrix& left, const Matrix& right, Mode mode, Rng& rng) {
    if (left.rows() != right.rows()) throw DimensionError("pair batch sides differ in length");
    PairForward out;
    auto a = forward(model.params, model.spec, left, mode, rng);
    auto b = forward(model.params, model.spec, right, mode, rng);
    out.left_embedding = std::move(a.output);
    out.right_embedding = std::move(b.output);
    out.left_trace = std::move(a.trace);
    out.right_trace = std::move(b.trace);
    out.distances.resize(left.rows());
    for (std::size_t i = 0; i < left.rows(); ++i) {
        out.distances[i] = euclidean_distance(out.left_embedding.row(i), out.right_embedding.row(i)).distance;
    }
    return out;
}

namespace {

Matrix row_matrix(std::span<const double> v) {
    Matrix m(1, v.size());
    std::copy(v.begin(), v.end(), m.row(0).begin());
    return m;
}

}  // namespace

double pair_distance(const SiameseModel& model, std::span<const double> a, std::span<const double> b) {
    const Matrix ea = predict(model.params, model.spec, row_matrix(a));
    const Matrix eb = predict(model.params, model.spec, row_matrix(b));
    return euclidean_distance(ea.row(0), eb.row(0)).distance;
}

GradSet pair_backward(const SiameseModel& model, const PairForward& fwd, std::span<const double> grad_distance,
                      double penalty_weight) {
    const std::size_t n = fwd.distances.size();
    if (grad_distance.size() != n || fwd.left_embedding.rows() != n || fwd.right_embedding.rows() != n) {
        throw DimensionError("pair gradient count does not match the forward batch");
    }
    const std::size_t width = fwd.left_embedding.cols();
    Matrix grad_left(n, width);
    Matrix grad_right(n, width);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad_distance[i];
        if (g == 0.0) continue;
        const auto d = euclidean_distance(fwd.left_embedding.row(i), fwd.right_embedding.row(i));
        for (std::size_t k = 0; k < width; ++k) {
            grad_left(i, k) = g * d.grad_a[k];
            grad_right(i, k) = g * d.grad_b[k];
        }
    }
    GradSet total = backward(fwd.left_trace, model.params, model.spec, grad_left, penalty_weight).grads;
    accumulate(total, backward(fwd.right_trace, model.params, model.spec, grad_right, penalty_weight).grads);
    return total;
}

bool pair_verdict(const SiameseModel& model, std::span<const double> a, std::span<const double> b) {
    return pair_distance(model, a, b) < model.pair_threshold;
}

ReferenceBank build_reference_bank(const FeatureTable& train, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ConfigError("reference bank needs k >= 1");
    Rng rng(seed);
    ReferenceBank bank;
    for (int label : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t r = 0; r < train.rows(); ++r) {
            if (train.labels[r] == label) idx.push_back(r);
        }
        if (idx.size() < k) {
            throw ConfigError("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                              " training samples, fewer than k = " + std::to_string(k));
        }
        std::vector<std::size_t> chosen;
        std::sample(idx.begin(), idx.end(), std::back_inserter(chosen), static_cast<std::ptrdiff_t>(k), rng);
        (label == 0 ? bank.refs0 : bank.refs1) = gather_rows(train.features, chosen);
    }
    return bank;
}

Classification classify_embedding(std::span<const double> embedding, const Matrix& ref_embeddings0,
                                  const Matrix& ref_embeddings1, Aggregator agg) {
    if (ref_embeddings0.rows() == 0 || ref_embeddings1.rows() == 0) throw ConfigError("empty reference bank");
    auto aggregate = [&](const Matrix& refs) {
        double acc = agg == Aggregator::mean ? 0.0 : std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < refs.rows(); ++r) {
            const double d = euclidean_distance(embedding, refs.row(r)).distance;
            acc = agg == Aggregator::mean ? acc + d : std::min(acc, d);
        }
        return agg == Aggregator::mean ? acc / static_cast<double>(refs.rows()) : acc;
    };
    Classification c;
    c.score0 = aggregate(ref_embeddings0);
    c.score1 = aggregate(ref_embeddings1);
    c.label = c.score0 < c.score1 ? 0 : 1;
    return c;
}

std::vector<Classification> classify_batch(const SiameseModel& model, const ReferenceBank& bank, const Matrix& x,
                                           Aggregator agg) {
    if (bank.refs0.rows() == 0 || bank.refs1.rows() == 0) throw ConfigError("empty reference bank");
    const Matrix e0 = predict(model.params, model.spec, bank.refs0);
    const Matrix e1 = predict(model.params, model.spec, bank.refs1);
    const Matrix ex = predict(model.params, model.spec, x);
    std::vector<Classification> out;
    out.reserve(x.rows());
    for (std::size_t i = 0; i < ex.rows(); ++i) out.push_back(classify_embedding(ex.row(i), e0, e1, agg));
    return out;
}

Classification classify(const SiameseModel& model, const ReferenceBank& bank, std::span<const double> x,
                        Aggregator agg) {
    return classify_batch(model, bank, row_matrix(x), agg).front();
}

namespace {

void write_rows(std::ostream& out, const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << text::format_double(row[c]);
        out << '\n';
    }
}

double read_number(std::istream& in) {
    std::string token;
    if (!(in >> token)) throw SchemaError("siamese checkpoint: truncated");
    const auto v = text::parse_double(token);
    if (!v) throw SchemaError("siamese checkpoint: bad number '" + token + "'");
    return *v;
}

void expect(std::istream& in, const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) throw SchemaError("siamese checkpoint: expected '" + word + "'");
}

}  // namespace

void save_siamese(const std::filesystem::path& path, const SiameseModel& model, const ReferenceBank* bank) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "chd-siamese 1\n";
    out << "margin " << text::format_double(model.margin) << '\n';
    out << "pair_threshold " << text::format_double(model.pair_threshold) << '\n';
    write_network(out, model.spec, model.params);
    if (bank && bank->k() > 0) {
        if (bank->refs0.cols() != model.spec.input_size() || bank->refs1.rows() != bank->k()) {
            throw DimensionError("reference bank does not match the model input");
        }
        out << "bank " << bank->k() << ' ' << bank->refs0.cols() << '\n';
        write_rows(out, bank->refs0);
        write_rows(out, bank->refs1);
    } else {
        out << "bank 0 0\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

SiameseCheckpoint load_siamese(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("checkpoint not found: " + path.string());
    expect(in, "chd-siamese");
    if (read_number(in) != 1.0) throw SchemaError("siamese checkpoint: unsupported version");
    SiameseCheckpoint ckpt;
    expect(in, "margin");
    ckpt.model.margin = read_number(in);
    expect(in, "pair_threshold");
    ckpt.model.pair_threshold = read_number(in);
    auto [spec, params] = read_network(in);
    ckpt.model.spec = std::move(spec);
    ckpt.model.params = std::move(params);
    expect(in, "bank");
    const auto k = static_cast<std::size_t>(read_number(in));
    const auto width = static_cast<std::size_t>(read_number(in));
    if (k > 0) {
        if (width != ckpt.model.spec.input_size()) throw SchemaError("siamese checkpoint: bank width mismatch");
        ckpt.bank.refs0 = Matrix(k, width);
        ckpt.bank.refs1 = Matrix(k, width);
        for (double& v : ckpt.bank.refs0.values()) v = read_number(in);
        for (double& v : ckpt.bank.refs1.values()) v = read_number(in);
    }
    return ckpt;
}

}  // namespace chd
