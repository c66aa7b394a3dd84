#pragma once

#include "gmsnet/coeff.hpp"
#include "gmsnet/mesh.hpp"
#include "gmsnet/spectral.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gms {

struct TensorSpec {
    std::string name;
    std::vector<std::uint64_t> shape;

    std::uint64_t size() const;
};

/// U-Net layout: `levels` encoder levels with base * 2^(L-1) channels at
/// level L, a bottleneck with base * 2^levels channels, mirrored decoder
/// levels, and a 1x1 classifier to `out_channels`.
struct UNetArchitecture {
    std::uint32_t levels = 4;
    std::uint32_t base_channels = 16;
    std::uint32_t in_channels = 1;
    std::uint32_t out_channels = 4;
    std::uint32_t input_side = 32;

    void validate() const;
    std::uint32_t channels(std::uint32_t level) const { return base_channels << (level - 1); }

    /// Tensor names and shapes in file order:
    ///   enc1..encL (conv1.weight, conv1.bias, conv2.weight, conv2.bias),
    ///   bottleneck (same four), decL..dec1 (up.weight, up.bias, conv1.*,
    ///   conv2.*), classifier.weight, classifier.bias.
    /// Every kernel is stored [out, in, kh, kw], including the transposed
    /// convolutions.
    std::vector<TensorSpec> schedule() const;
    std::uint64_t parameter_count() const;

    bool operator==(const UNetArchitecture&) const = default;
};

struct Tensor {
    TensorSpec spec;
    std::vector<float> values;  // row-major over spec.shape
};

class UNetWeights {
public:
    /// Throws FormatError if the tensors do not follow the schedule or hold
    /// non-finite values.
    UNetWeights(UNetArchitecture arch, std::vector<Tensor> tensors);

    static UNetWeights zeros(const UNetArchitecture& arch);
    /// He-normal kernels (std sqrt(2 / fan_in)) and N(0, 0.01^2) biases drawn
    /// in schedule order from Rng(seed).
    static UNetWeights random(const UNetArchitecture& arch, std::uint64_t seed);

    const UNetArchitecture& architecture() const { return arch_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }
    const Tensor& tensor(const std::string& name) const;

private:
    UNetArchitecture arch_;
    std::vector<Tensor> tensors_;
};

/// Weight file, little-endian: "MSUW", u32 version 1, u32 levels,
/// base_channels, in_channels, out_channels, input_side, u32 tensor count,
/// then per tensor u32 name length, name bytes, u32 rank, u64 dims, float32
/// payload.
UNetWeights read_weights(std::istream& in);
UNetWeights load_weights(const std::filesystem::path& path);
void write_weights(std::ostream& out, const UNetWeights& weights);
void save_weights(const UNetWeights& weights, const std::filesystem::path& path);

/// Channel-major stack of square images: data(c, y * side + x).
struct FeatureMap {
    using Storage = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    Index side = 0;
    Storage data;

    Index channels() const { return data.rows(); }
};

/// 3x3 convolution, zero padding 1, stride 1; kernel [out, in, 3, 3].
FeatureMap conv3x3(const FeatureMap& in, const Tensor& weight, const Tensor& bias);
/// 1x1 convolution; kernel [out, in, 1, 1].
FeatureMap conv1x1(const FeatureMap& in, const Tensor& weight, const Tensor& bias);
/// Transposed 3x3 convolution, stride 2, padding 1, output padding 1; the
/// side doubles. Kernel [out, in, 3, 3]: input pixel (iy, ix) adds
/// w[o][i][ky][kx] * x[i][iy][ix] to output (2 iy - 1 + ky, 2 ix - 1 + kx).
FeatureMap conv_transpose3x3(const FeatureMap& in, const Tensor& weight, const Tensor& bias);
FeatureMap max_pool2(const FeatureMap& in);
void relu_inplace(FeatureMap& map);

/// Full network: per encoder level two conv3x3+ReLU then 2x2 max pooling,
/// bottleneck two conv3x3+ReLU, per decoder level a transposed conv,
/// channel concatenation [upsampled, encoder skip], two conv3x3+ReLU, and a
/// final 1x1 classifier without activation.
FeatureMap unet_forward(const UNetWeights& weights, const FeatureMap& input);

/// (log kappa - mean) / max(std, 1e-8) over the tile, population std.
Eigen::VectorXd standardize_log(const Eigen::VectorXd& tile);

struct NetworkBasisOptions {
    /// Replace an element whose network block is rank deficient with the
    /// eigensolver block instead of failing.
    bool fallback_to_lsp = true;
};

struct NetworkProlongation {
    Prolongation prolongation;
    /// Elements that fell back to the eigensolver.
    std::vector<Index> fallback_elements;
};

/// Coarse block for one square tile: network channels with the weighted
/// constant projected out, the weighted-normalized constant prepended, and
/// the result orthonormalized. Tiles whose side divides the network input
/// side are nearest-neighbour upsampled on input and mean-downsampled on
/// output. Throws RankDeficiencyError on degenerate network output.
CoarseBlock network_block(const UNetWeights& weights, const Eigen::VectorXd& tile, Index side,
                          double hx, double hy);

NetworkProlongation predict_prolongation(const UNetWeights& weights, const TwoScaleMesh& mesh,
                                         const CoefficientField& kappa,
                                         const NetworkBasisOptions& options = {});

} // namespace gms
