#include "gmsnet/surrogate.hpp"

#include "gmsnet/errors.hpp"
#include "gmsnet/parallel.hpp"
#include "gmsnet/rng.hpp"
#include "gmsnet/subspace.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace gms {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'S', 'U', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxNameLength = 4096;

std::string shape_string(const std::vector<std::uint64_t>& shape) {
    std::ostringstream s;
    s << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? ", " : "") << shape[i];
    s << ']';
    return s.str();
}

} // namespace

std::uint64_t TensorSpec::size() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

void UNetArchitecture::validate() const {
    if (levels < 2 || levels > 4)
        throw ConfigError("U-Net levels must be 2, 3 or 4, got " + std::to_string(levels));
    if (base_channels == 0 || in_channels == 0 || out_channels == 0)
        throw ConfigError("U-Net channel counts must be positive");
    if (input_side == 0 || input_side % (1u << levels) != 0)
        throw ConfigError("input side " + std::to_string(input_side) + " is not divisible by 2^" +
                          std::to_string(levels));
}

std::vector<TensorSpec> UNetArchitecture::schedule() const {
    validate();
    std::vector<TensorSpec> out;
    auto conv = [&](const std::string& prefix, std::uint64_t o, std::uint64_t i, std::uint64_t k) {
        out.push_back({prefix + ".weight", {o, i, k, k}});
        out.push_back({prefix + ".bias", {o}});
    };
    std::uint64_t prev = in_channels;
    for (std::uint32_t l = 1; l <= levels; ++l) {
        const std::string name = "enc" + std::to_string(l);
        conv(name + ".conv1", channels(l), prev, 3);
        conv(name + ".conv2", channels(l), channels(l), 3);
        prev = channels(l);
    }
    const std::uint64_t deep = static_cast<std::uint64_t>(base_channels) << levels;
    conv("bottleneck.conv1", deep, prev, 3);
    conv("bottleneck.conv2", deep, deep, 3);
    prev = deep;
    for (std::uint32_t l = levels; l >= 1; --l) {
        const std::string name = "dec" + std::to_string(l);
        conv(name + ".up", channels(l), prev, 3);
        conv(name + ".conv1", channels(l), 2 * static_cast<std::uint64_t>(channels(l)), 3);
        conv(name + ".conv2", channels(l), channels(l), 3);
        prev = channels(l);
    }
    conv("classifier", out_channels, base_channels, 1);
    return out;
}

std::uint64_t UNetArchitecture::parameter_count() const {
    std::uint64_t n = 0;
    for (const auto& t : schedule()) n += t.size();
    return n;
}

UNetWeights::UNetWeights(UNetArchitecture arch, std::vector<Tensor> tensors)
    : arch_(arch), tensors_(std::move(tensors)) {
    const auto expected = arch_.schedule();
    if (expected.size() != tensors_.size())
        throw FormatError("expected " + std::to_string(expected.size()) + " tensors, got " +
                          std::to_string(tensors_.size()));
    for (std::size_t k = 0; k < expected.size(); ++k) {
        const auto& t = tensors_[k];
        if (t.spec.name != expected[k].name)
            throw FormatError("tensor " + std::to_string(k) + ": expected '" + expected[k].name +
                              "', found '" + t.spec.name + "'");
        if (t.spec.shape != expected[k].shape)
            throw FormatError("tensor '" + t.spec.name + "': shape " + shape_string(t.spec.shape) +
                              " does not match schedule " + shape_string(expected[k].shape));
        if (t.values.size() != t.spec.size())
            throw FormatError("tensor '" + t.spec.name + "': payload has " +
                              std::to_string(t.values.size()) + " values");
        for (std::size_t i = 0; i < t.values.size(); ++i)
            if (!std::isfinite(t.values[i]))
                throw FormatError("tensor '" + t.spec.name + "': value " + std::to_string(i) +
                                  " is not finite");
    }
}

UNetWeights UNetWeights::zeros(const UNetArchitecture& arch) {
    std::vector<Tensor> tensors;
    for (auto& spec : arch.schedule()) {
        const auto n = spec.size();
        tensors.push_back({std::move(spec), std::vector<float>(n, 0.0f)});
    }
    return UNetWeights(arch, std::move(tensors));
}

UNetWeights UNetWeights::random(const UNetArchitecture& arch, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> tensors;
    for (auto& spec : arch.schedule()) {
        const auto n = spec.size();
        double scale = 0.01;
        if (spec.shape.size() == 4)
            scale = std::sqrt(2.0 / static_cast<double>(spec.shape[1] * spec.shape[2] * spec.shape[3]));
        std::vector<float> values(n);
        for (auto& v : values) v = static_cast<float>(scale * rng.normal());
        tensors.push_back({std::move(spec), std::move(values)});
    }
    return UNetWeights(arch, std::move(tensors));
}

const Tensor& UNetWeights::tensor(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.spec.name == name) return t;
    throw ConfigError("no tensor named '" + name + "'");
}

// ---------------------------------------------------------------- file format

namespace {

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::uint64_t offset() const { return offset_; }

    void bytes(void* dst, std::size_t n, const std::string& what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError("truncated at offset " + std::to_string(offset_ + static_cast<std::uint64_t>(in_.gcount())) +
                              " while reading " + what);
        offset_ += n;
    }

    std::uint32_t u32(const std::string& what) {
        std::array<unsigned char, 4> b{};
        bytes(b.data(), 4, what);
        return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
               static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    }

    std::uint64_t u64(const std::string& what) {
        const std::uint64_t lo = u32(what);
        const std::uint64_t hi = u32(what);
        return lo | hi << 32;
    }

private:
    std::istream& in_;
    std::uint64_t offset_ = 0;
};

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

} // namespace

UNetWeights read_weights(std::istream& in) {
    Reader r(in);
    std::array<char, 4> magic{};
    r.bytes(magic.data(), 4, "magic");
    if (magic != kMagic) throw FormatError("bad magic at offset 0: not a weight file");
    const auto version = r.u32("version");
    if (version != kVersion)
        throw FormatError("unsupported weight format version " + std::to_string(version) + " at offset 4");

    UNetArchitecture arch;
    arch.levels = r.u32("architecture");
    arch.base_channels = r.u32("architecture");
    arch.in_channels = r.u32("architecture");
    arch.out_channels = r.u32("architecture");
    arch.input_side = r.u32("architecture");
    try {
        arch.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid architecture block at offset 8: ") + e.what());
    }
    const auto schedule = arch.schedule();
    const auto count_offset = r.offset();
    const auto count = r.u32("tensor count");
    if (count != schedule.size())
        throw FormatError("tensor count " + std::to_string(count) + " at offset " +
                          std::to_string(count_offset) + " does not match the " +
                          std::to_string(schedule.size()) + "-tensor schedule");

    std::vector<Tensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto& expected = schedule[k];
        const std::string last = tensors.empty() ? "none" : "'" + tensors.back().spec.name + "'";
        try {
            const auto start = r.offset();
            const std::string ctx = "tensor " + std::to_string(k) + " ('" + expected.name + "')";
            const auto len = r.u32(ctx);
            if (len > kMaxNameLength)
                throw FormatError(ctx + ": name length " + std::to_string(len) + " at offset " +
                                  std::to_string(start) + " is implausible");
            std::string name(len, '\0');
            r.bytes(name.data(), len, ctx);
            if (name != expected.name)
                throw FormatError("tensor " + std::to_string(k) + " at offset " + std::to_string(start) +
                                  ": expected '" + expected.name + "', found '" + name + "'");
            const auto rank = r.u32(ctx);
            if (rank != expected.shape.size())
                throw FormatError("tensor '" + name + "' at offset " + std::to_string(start) + ": rank " +
                                  std::to_string(rank) + ", schedule has " +
                                  std::to_string(expected.shape.size()));
            std::vector<std::uint64_t> shape(rank);
            for (auto& d : shape) d = r.u64(ctx);
            if (shape != expected.shape)
                throw FormatError("tensor '" + name + "' at offset " + std::to_string(start) + ": shape " +
                                  shape_string(shape) + " does not match schedule " +
                                  shape_string(expected.shape));
            const auto payload = r.offset();
            std::vector<float> values(expected.size());
            std::vector<std::uint32_t> raw(values.size());
            r.bytes(raw.data(), raw.size() * 4, ctx + " payload");
            for (std::size_t i = 0; i < raw.size(); ++i) {
                std::uint32_t v = raw[i];
                if constexpr (std::endian::native == std::endian::big)
                    v = (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
                values[i] = std::bit_cast<float>(v);
                if (!std::isfinite(values[i]))
                    throw FormatError("tensor '" + name + "': value " + std::to_string(i) + " at offset " +
                                      std::to_string(payload + 4 * i) + " is not finite");
            }
            tensors.push_back({{std::move(name), std::move(shape)}, std::move(values)});
        } catch (const FormatError& e) {
            const std::string what = e.what();
            if (what.rfind("truncated", 0) == 0)
                throw FormatError(what + "; last valid tensor " + last);
            throw;
        }
    }
    return UNetWeights(arch, std::move(tensors));
}

UNetWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open weight file " + path.string());
    try {
        return read_weights(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_weights(std::ostream& out, const UNetWeights& weights) {
    const auto& a = weights.architecture();
    out.write(kMagic.data(), 4);
    put_u32(out, kVersion);
    for (auto v : {a.levels, a.base_channels, a.in_channels, a.out_channels, a.input_side}) put_u32(out, v);
    put_u32(out, static_cast<std::uint32_t>(weights.tensors().size()));
    for (const auto& t : weights.tensors()) {
        put_u32(out, static_cast<std::uint32_t>(t.spec.name.size()));
        out.write(t.spec.name.data(), static_cast<std::streamsize>(t.spec.name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.spec.shape.size()));
        for (auto d : t.spec.shape) put_u64(out, d);
        for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
}

void save_weights(const UNetWeights& weights, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write weight file " + path.string());
    write_weights(out, weights);
    if (!out) throw Error("write failed for " + path.string());
}

// ------------------------------------------------------------------- forward

namespace {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_kernel(const FeatureMap& in, const Tensor& weight, const Tensor& bias, std::uint64_t k) {
    const auto& s = weight.spec.shape;
    if (s.size() != 4 || s[1] != static_cast<std::uint64_t>(in.channels()) || s[2] != k || s[3] != k ||
        bias.spec.shape.size() != 1 || bias.spec.shape[0] != s[0])
        throw ContractError("layer '" + weight.spec.name + "' " + shape_string(s) + " cannot take " +
                            std::to_string(in.channels()) + " input channels");
}

} // namespace

FeatureMap conv3x3(const FeatureMap& in, const Tensor& weight, const Tensor& bias) {
    check_kernel(in, weight, bias, 3);
    const Index side = in.side, pixels = side * side, cin = in.channels();
    const auto cout = static_cast<Index>(weight.spec.shape[0]);
    RowMatrixF columns = RowMatrixF::Zero(cin * 9, pixels);
    for (Index c = 0; c < cin; ++c)
        for (Index ky = 0; ky < 3; ++ky)
            for (Index kx = 0; kx < 3; ++kx) {
                float* row = columns.row(c * 9 + ky * 3 + kx).data();
                for (Index y = 0; y < side; ++y) {
                    const Index sy = y + ky - 1;
                    if (sy < 0 || sy >= side) continue;
                    for (Index x = 0; x < side; ++x) {
                        const Index sx = x + kx - 1;
                        if (sx >= 0 && sx < side) row[y * side + x] = in.data(c, sy * side + sx);
                    }
                }
            }
    const Eigen::Map<const RowMatrixF> w(weight.values.data(), cout, cin * 9);
    const Eigen::Map<const Eigen::VectorXf> b(bias.values.data(), cout);
    FeatureMap out;
    out.side = side;
    out.data = w * columns;
    out.data.colwise() += b;
    return out;
}

FeatureMap conv1x1(const FeatureMap& in, const Tensor& weight, const Tensor& bias) {
    check_kernel(in, weight, bias, 1);
    const auto cout = static_cast<Index>(weight.spec.shape[0]);
    const Eigen::Map<const RowMatrixF> w(weight.values.data(), cout, in.channels());
    const Eigen::Map<const Eigen::VectorXf> b(bias.values.data(), cout);
    FeatureMap out;
    out.side = in.side;
    out.data = w * in.data;
    out.data.colwise() += b;
    return out;
}

FeatureMap conv_transpose3x3(const FeatureMap& in, const Tensor& weight, const Tensor& bias) {
    check_kernel(in, weight, bias, 3);
    const Index side = in.side, cin = in.channels();
    const auto cout = static_cast<Index>(weight.spec.shape[0]);
    // Rows (o, ky, kx) of the kernel seen as a (cout * 9) x cin matrix.
    RowMatrixF w(cout * 9, cin);
    for (Index o = 0; o < cout; ++o)
        for (Index i = 0; i < cin; ++i)
            for (Index k = 0; k < 9; ++k)
                w(o * 9 + k, i) = weight.values[static_cast<std::size_t>((o * cin + i) * 9 + k)];
    const RowMatrixF contrib = w * in.data;

    FeatureMap out;
    out.side = 2 * side;
    out.data.resize(cout, out.side * out.side);
    for (Index o = 0; o < cout; ++o) out.data.row(o).setConstant(bias.values[static_cast<std::size_t>(o)]);
    for (Index o = 0; o < cout; ++o)
        for (Index ky = 0; ky < 3; ++ky)
            for (Index kx = 0; kx < 3; ++kx) {
                const float* src = contrib.row(o * 9 + ky * 3 + kx).data();
                float* dst = out.data.row(o).data();
                for (Index iy = 0; iy < side; ++iy) {
                    const Index y = 2 * iy - 1 + ky;
                    if (y < 0 || y >= out.side) continue;
                    for (Index ix = 0; ix < side; ++ix) {
                        const Index x = 2 * ix - 1 + kx;
                        if (x >= 0 && x < out.side) dst[y * out.side + x] += src[iy * side + ix];
                    }
                }
            }
    return out;
}

FeatureMap max_pool2(const FeatureMap& in) {
    if (in.side % 2 != 0) throw ContractError("max pooling needs an even side, got " + std::to_string(in.side));
    FeatureMap out;
    out.side = in.side / 2;
    out.data.resize(in.channels(), out.side * out.side);
    for (Index c = 0; c < in.channels(); ++c)
        for (Index y = 0; y < out.side; ++y)
            for (Index x = 0; x < out.side; ++x) {
                const Index p = 2 * y * in.side + 2 * x;
                out.data(c, y * out.side + x) =
                    std::max({in.data(c, p), in.data(c, p + 1), in.data(c, p + in.side), in.data(c, p + in.side + 1)});
            }
    return out;
}

void relu_inplace(FeatureMap& map) { map.data = map.data.cwiseMax(0.0f); }

FeatureMap unet_forward(const UNetWeights& weights, const FeatureMap& input) {
    const auto& a = weights.architecture();
    if (input.channels() != static_cast<Index>(a.in_channels) || input.side != static_cast<Index>(a.input_side))
        throw ConfigError("network expects " + std::to_string(a.in_channels) + "x" +
                          std::to_string(a.input_side) + "x" + std::to_string(a.input_side) + " input, got " +
                          std::to_string(input.channels()) + "x" + std::to_string(input.side) + "x" +
                          std::to_string(input.side));
    auto block = [&](const FeatureMap& x, const std::string& prefix) {
        FeatureMap h = conv3x3(x, weights.tensor(prefix + ".conv1.weight"), weights.tensor(prefix + ".conv1.bias"));
        relu_inplace(h);
        h = conv3x3(h, weights.tensor(prefix + ".conv2.weight"), weights.tensor(prefix + ".conv2.bias"));
        relu_inplace(h);
        return h;
    };

    std::vector<FeatureMap> skips;
    FeatureMap x = input;
    for (std::uint32_t l = 1; l <= a.levels; ++l) {
        skips.push_back(block(x, "enc" + std::to_string(l)));
        x = max_pool2(skips.back());
    }
    x = block(x, "bottleneck");
    for (std::uint32_t l = a.levels; l >= 1; --l) {
        const std::string name = "dec" + std::to_string(l);
        FeatureMap up = conv_transpose3x3(x, weights.tensor(name + ".up.weight"), weights.tensor(name + ".up.bias"));
        const FeatureMap& skip = skips[l - 1];
        if (up.side != skip.side)
            throw ContractError("decoder level " + std::to_string(l) + ": upsampled side " +
                                std::to_string(up.side) + " != skip side " + std::to_string(skip.side));
        FeatureMap cat;
        cat.side = up.side;
        cat.data.resize(up.channels() + skip.channels(), up.data.cols());
        cat.data.topRows(up.channels()) = up.data;
        cat.data.bottomRows(skip.channels()) = skip.data;
        x = block(cat, name);
    }
    return conv1x1(x, weights.tensor("classifier.weight"), weights.tensor("classifier.bias"));
}

// ----------------------------------------------------------------- prolongation

Eigen::VectorXd standardize_log(const Eigen::VectorXd& tile) {
    const Eigen::VectorXd z = tile.array().log();
    const double mean = z.mean();
    const double var = (z.array() - mean).square().mean();
    return (z.array() - mean) / std::max(std::sqrt(var), 1e-8);
}

CoarseBlock network_block(const UNetWeights& weights, const Eigen::VectorXd& tile, Index side,
                          double hx, double hy) {
    const auto& a = weights.architecture();
    const auto net = static_cast<Index>(a.input_side);
    if (tile.size() != side * side) throw ConfigError("tile is not square");
    if (side <= 0 || net % side != 0)
        throw ConfigError("tile side " + std::to_string(side) + " does not divide the network input side " +
                          std::to_string(net));
    if (a.in_channels != 1) throw ConfigError("network must take a single input channel");
    const Index f = net / side;

    const Eigen::VectorXd z = standardize_log(tile);
    FeatureMap input;
    input.side = net;
    input.data.resize(1, net * net);
    for (Index y = 0; y < net; ++y)
        for (Index x = 0; x < net; ++x) input.data(0, y * net + x) = static_cast<float>(z[(y / f) * side + x / f]);
    const FeatureMap raw = unet_forward(weights, input);

    const Index k = raw.channels();
    Eigen::MatrixXd block(side * side, k + 1);
    for (Index c = 0; c < k; ++c)
        for (Index y = 0; y < side; ++y)
            for (Index x = 0; x < side; ++x) {
                double sum = 0.0;
                for (Index dy = 0; dy < f; ++dy)
                    for (Index dx = 0; dx < f; ++dx) sum += raw.data(c, (y * f + dy) * net + x * f + dx);
                block(y * side + x, c + 1) = sum / static_cast<double>(f * f);
            }

    const Eigen::VectorXd w = tile * (hx * hy);
    const double total = w.sum();
    for (Index c = 1; c <= k; ++c) block.col(c).array() -= w.dot(block.col(c)) / total;
    block.col(0).setConstant(1.0 / std::sqrt(total));

    CoarseBlock out;
    out.basis = orthonormalize(block, w).basis;
    return out;
}

NetworkProlongation predict_prolongation(const UNetWeights& weights, const TwoScaleMesh& mesh,
                                         const CoefficientField& kappa, const NetworkBasisOptions& options) {
    if (mesh.mx() != mesh.my()) throw ConfigError("network prolongation needs square coarse elements");
    if (!(kappa.mesh() == mesh)) throw ConfigError("coefficient field belongs to a different mesh");
    const auto n = static_cast<std::size_t>(mesh.coarse_count());
    const Index n_c = static_cast<Index>(weights.architecture().out_channels) + 1;
    if (n_c > mesh.cells_per_element())
        throw ConfigError("network produces " + std::to_string(n_c) + " basis functions for " +
                          std::to_string(mesh.cells_per_element()) + "-cell elements");
    std::vector<CoarseBlock> blocks(n);
    std::vector<char> fell_back(n, 0);
    parallel_for(n, [&](std::size_t j) {
        const auto e = static_cast<Index>(j);
        try {
            blocks[j] = network_block(weights, kappa.element_values(e), mesh.mx(), mesh.hx(), mesh.hy());
        } catch (const RankDeficiencyError& err) {
            if (!options.fallback_to_lsp)
                throw RankDeficiencyError("coarse element " + std::to_string(j) + ": " + err.what(), err.pivot());
            blocks[j] = solve_lsp(local_pencil(mesh, kappa, e), n_c);
            fell_back[j] = 1;
        }
        blocks[j].element = e;
    });
    NetworkProlongation out{Prolongation(mesh, std::move(blocks)), {}};
    for (std::size_t j = 0; j < n; ++j)
        if (fell_back[j]) out.fallback_elements.push_back(static_cast<Index>(j));
    return out;
}

} // namespace gms
