#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "chd/error.hpp"
#include "chd/nn_engine.hpp"
#include "chd/text_io.hpp"

namespace chd {

namespace {

constexpr const char* kParamsTag = "chd-params";
constexpr int kParamsVersion = 1;

void expect_word(std::istream& in, const std::string& word) {
    std::string got;
    if (!(in >> got) || got != word) {
        throw SchemaError("checkpoint: expected '" + word + "', got '" + got + "'");
    }
}

template <typename T>
T read_value(std::istream& in, const char* what) {
    T v{};
    if (!(in >> v)) throw SchemaError(std::string("checkpoint: cannot read ") + what);
    return v;
}

double read_double(std::istream& in) {
    std::string token;
    if (!(in >> token)) throw SchemaError("checkpoint: truncated numeric data");
    const auto v = text::parse_double(token);
    if (!v) throw SchemaError("checkpoint: bad number '" + token + "'");
    return *v;
}

}  // namespace

void write_network(std::ostream& out, const NetworkSpec& spec, const ParamSet& params) {
    spec.validate();
    check_shapes(params, spec);
    out << kParamsTag << ' ' << kParamsVersion << '\n';
    out << "layers " << spec.layers.size() << '\n';
    for (const auto& l : spec.layers) {
        out << "layer " << l.in_size << ' ' << l.out_size << ' ' << to_string(l.activation) << ' '
            << text::format_double(l.dropout_rate) << ' ' << text::format_double(l.activity_l2) << '\n';
    }
    for (const auto& p : params.layers) {
        for (std::size_t o = 0; o < p.weight.rows(); ++o) {
            const auto row = p.weight.row(o);
            for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "") << text::format_double(row[k]);
            out << '\n';
        }
        for (std::size_t o = 0; o < p.bias.size(); ++o) out << (o ? " " : "") << text::format_double(p.bias[o]);
        out << '\n';
    }
}

std::pair<NetworkSpec, ParamSet> read_network(std::istream& in) {
    expect_word(in, kParamsTag);
    const int version = read_value<int>(in, "version");
    if (version != kParamsVersion) throw SchemaError("checkpoint: unsupported version " + std::to_string(version));
    expect_word(in, "layers");
    const auto count = read_value<std::size_t>(in, "layer count");

    NetworkSpec spec;
    for (std::size_t l = 0; l < count; ++l) {
        expect_word(in, "layer");
        LayerSpec ls;
        ls.in_size = read_value<std::size_t>(in, "in_size");
        ls.out_size = read_value<std::size_t>(in, "out_size");
        ls.activation = activation_from_string(read_value<std::string>(in, "activation"));
        ls.dropout_rate = read_double(in);
        ls.activity_l2 = read_double(in);
        spec.layers.push_back(ls);
    }
    spec.validate();

    ParamSet params;
    for (const auto& ls : spec.layers) {
        LayerParams p{Matrix(ls.out_size, ls.in_size), std::vector<double>(ls.out_size)};
        for (double& w : p.weight.values()) w = read_double(in);
        for (double& b : p.bias) b = read_double(in);
        params.layers.push_back(std::move(p));
    }
    if (!params.all_finite()) throw SchemaError("checkpoint: non-finite parameter");
    return {std::move(spec), std::move(params)};
}

void save_network(const std::filesystem::path& path, const NetworkSpec& spec, const ParamSet& params) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_network(out, spec, params);
    if (!out) throw IoError("write failed: " + path.string());
}

std::pair<NetworkSpec, ParamSet> load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("checkpoint not found: " + path.string());
    return read_network(in);
}

}  // namespace chd
