#include "gmsnet/assembly.hpp"
#include "gmsnet/coeff.hpp"
#include "gmsnet/datagen.hpp"
#include "gmsnet/errors.hpp"
#include "gmsnet/parallel.hpp"
#include "gmsnet/precond.hpp"
#include "gmsnet/spectral.hpp"
#include "gmsnet/subspace.hpp"
#include "gmsnet/surrogate.hpp"
#include "gmsnet/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

namespace py = pybind11;
using namespace gms;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

CoefficientField field_from(const TwoScaleMesh& mesh, const Eigen::VectorXd& values) {
    return CoefficientField(mesh, values);
}

// kappa (nx*nx values, row-major) -> CSR triple
py::tuple tpfa_csr(const TwoScaleMesh& mesh, const Eigen::VectorXd& kappa) {
    SparseOperator a = assemble_tpfa(mesh, field_from(mesh, kappa));
    a.makeCompressed();
    const auto nnz = a.nonZeros();
    py::array_t<double> data(nnz);
    py::array_t<std::int64_t> indices(nnz), indptr(a.rows() + 1);
    std::copy(a.valuePtr(), a.valuePtr() + nnz, data.mutable_data());
    std::copy(a.innerIndexPtr(), a.innerIndexPtr() + nnz, indices.mutable_data());
    std::copy(a.outerIndexPtr(), a.outerIndexPtr() + a.rows() + 1, indptr.mutable_data());
    return py::make_tuple(data, indices, indptr);
}

py::dict solve(const TwoScaleMesh& mesh, const Eigen::VectorXd& kappa, Index n_c, double tol, Index maxit,
               const std::optional<std::filesystem::path>& weights) {
    const auto field = field_from(mesh, kappa);
    std::optional<Prolongation> p;
    if (weights)
        p.emplace(predict_prolongation(load_weights(*weights), mesh, field).prolongation);
    else
        p.emplace(build_prolongation(mesh, field, n_c));
    const auto a = assemble_tpfa(mesh, field);
    const auto two_grid = build_two_grid(a, *p, build_block_jacobi(a, mesh));
    const auto report = pcg(a, assemble_source(mesh, SourcePattern::Corners), two_grid, tol, maxit);
    py::dict out;
    out["solution"] = report.solution;
    out["iterations"] = report.iterations;
    out["converged"] = report.converged;
    out["relative_residuals"] = report.relative_residuals;
    return out;
}

FeatureMap map_from(const FloatArray& x) {
    if (x.ndim() != 3 || x.shape(1) != x.shape(2)) throw ConfigError("expected a [channels, side, side] array");
    FeatureMap m;
    m.side = x.shape(1);
    m.data = Eigen::Map<const FeatureMap::Storage>(x.data(), x.shape(0), x.shape(1) * x.shape(2));
    return m;
}

FloatArray array_from(const FeatureMap& m) {
    FloatArray out({m.channels(), m.side, m.side});
    std::copy(m.data.data(), m.data.data() + m.data.size(), out.mutable_data());
    return out;
}

Tensor tensor_from(const std::string& name, const FloatArray& a) {
    Tensor t;
    t.spec.name = name;
    for (py::ssize_t d = 0; d < a.ndim(); ++d) t.spec.shape.push_back(static_cast<std::uint64_t>(a.shape(d)));
    t.values.assign(a.data(), a.data() + a.size());
    return t;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multiscale two-grid Darcy solver core";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    auto numerical = py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<RankDeficiencyError>(m, "RankDeficiencyError", numerical.ptr());

    m.def("set_max_threads", &set_max_threads, py::arg("n"));

    py::class_<TwoScaleMesh>(m, "Mesh")
        .def(py::init(&build_mesh), py::arg("nx"), py::arg("ny"), py::arg("cx"), py::arg("cy"))
        .def_property_readonly("nx", &TwoScaleMesh::nx)
        .def_property_readonly("ny", &TwoScaleMesh::ny)
        .def_property_readonly("cx", &TwoScaleMesh::cx)
        .def_property_readonly("cy", &TwoScaleMesh::cy)
        .def_property_readonly("fine_count", &TwoScaleMesh::fine_count)
        .def_property_readonly("coarse_count", &TwoScaleMesh::coarse_count)
        .def("element_cells", &TwoScaleMesh::element_cells);

    m.def(
        "sample_log_gaussian",
        [](const TwoScaleMesh& mesh, std::uint64_t seed, double sigma2, double eta1, double eta2, Index modes) {
            GaussianFieldSpec spec{sigma2, eta1, eta2, modes};
            return Eigen::VectorXd(sample_log_gaussian(mesh, spec, seed).values());
        },
        py::arg("mesh"), py::arg("seed"), py::arg("sigma2") = 2.0, py::arg("eta1") = 0.1, py::arg("eta2") = 0.1,
        py::arg("modes") = 0);
    m.def(
        "sample_random_disks",
        [](const TwoScaleMesh& mesh, std::uint64_t seed, double kappa_b, Index n_disks) {
            DiskFieldSpec spec;
            spec.kappa_b = kappa_b;
            spec.n_disks = n_disks;
            return Eigen::VectorXd(sample_random_disks(mesh, spec, seed).values());
        },
        py::arg("mesh"), py::arg("seed"), py::arg("kappa_b") = 1e4, py::arg("n_disks") = 15);

    m.def("assemble_tpfa", &tpfa_csr, py::arg("mesh"), py::arg("kappa"),
          "CSR arrays (data, indices, indptr) of the two-point flux operator.");
    m.def("solve", &solve, py::arg("mesh"), py::arg("kappa"), py::arg("n_c") = 5, py::arg("tol") = 1e-6,
          py::arg("maxit") = 500, py::arg("weights") = py::none());

    m.def("dist", py::overload_cast<const Eigen::MatrixXd&, const Eigen::MatrixXd&, const Eigen::VectorXd&>(&dist),
          py::arg("a"), py::arg("b"), py::arg("weight"));
    m.def(
        "orthonormalize",
        [](const Eigen::MatrixXd& block, const Eigen::VectorXd& weight) { return orthonormalize(block, weight).basis; },
        py::arg("block"), py::arg("weight"));
    m.def(
        "local_basis",
        [](const Eigen::VectorXd& tile, Index side, double h, Index n_c) {
            const auto b = solve_lsp(tile_pencil(tile, side, side, h, h), n_c);
            return py::make_tuple(b.basis, b.eigenvalues);
        },
        py::arg("tile"), py::arg("side"), py::arg("h"), py::arg("n_c"));
    m.def("tile_labels", &tile_labels, py::arg("tile"), py::arg("m"), py::arg("h"), py::arg("n_c"));

    py::enum_<Symmetry>(m, "Symmetry")
        .value("ROW_FLIP", Symmetry::RowFlip)
        .value("COLUMN_FLIP", Symmetry::ColumnFlip)
        .value("TRANSPOSE", Symmetry::Transpose)
        .value("ANTI_TRANSPOSE", Symmetry::AntiTranspose);
    m.def("transform_tile", &transform_tile, py::arg("values"), py::arg("mx"), py::arg("my"), py::arg("t"));

    py::class_<DatasetRecord>(m, "DatasetRecord")
        .def(py::init([](Index side, Eigen::VectorXd kappa, Eigen::MatrixXd label) {
                 return DatasetRecord{side, std::move(kappa), std::move(label)};
             }),
             py::arg("m"), py::arg("kappa"), py::arg("label"))
        .def_readwrite("m", &DatasetRecord::m)
        .def_readwrite("kappa", &DatasetRecord::kappa)
        .def_readwrite("label", &DatasetRecord::label);
    m.def("extract_records",
          [](const TwoScaleMesh& mesh, const Eigen::VectorXd& kappa, Index n_c) {
              return extract_records(mesh, field_from(mesh, kappa), n_c);
          },
          py::arg("mesh"), py::arg("kappa"), py::arg("n_c"));
    m.def("symmetry_augment", &symmetry_augment, py::arg("record"));
    m.def("write_dataset", py::overload_cast<const std::vector<DatasetRecord>&, const std::filesystem::path&>(&write_dataset),
          py::arg("records"), py::arg("path"));
    m.def(
        "read_dataset",
        [](const std::filesystem::path& path, std::optional<Index> m_expected, std::optional<Index> n_basis) {
            std::optional<DatasetHeader> expected;
            if (m_expected && n_basis) expected = DatasetHeader{*m_expected, *n_basis, 0};
            return read_dataset(path, expected);
        },
        py::arg("path"), py::arg("m") = py::none(), py::arg("n_basis") = py::none());

    py::class_<KLModel>(m, "KLModel")
        .def_readonly("m", &KLModel::m)
        .def_readonly("mean", &KLModel::mean)
        .def_readonly("eigenvalues", &KLModel::eigenvalues)
        .def_readonly("modes", &KLModel::modes);
    m.def("fit_kl", &fit_kl, py::arg("tiles"), py::arg("m"), py::arg("l"));
    m.def("kl_tile", &kl_tile, py::arg("model"), py::arg("omega"));
    m.def("kl_augment", &kl_augment, py::arg("model"), py::arg("count"), py::arg("seed"));

    py::class_<UNetArchitecture>(m, "UNetArchitecture")
        .def(py::init([](std::uint32_t levels, std::uint32_t base, std::uint32_t in, std::uint32_t out, std::uint32_t side) {
                 UNetArchitecture a{levels, base, in, out, side};
                 a.validate();
                 return a;
             }),
             py::arg("levels") = 4, py::arg("base_channels") = 16, py::arg("in_channels") = 1,
             py::arg("out_channels") = 4, py::arg("input_side") = 32)
        .def_readonly("levels", &UNetArchitecture::levels)
        .def_readonly("base_channels", &UNetArchitecture::base_channels)
        .def_readonly("in_channels", &UNetArchitecture::in_channels)
        .def_readonly("out_channels", &UNetArchitecture::out_channels)
        .def_readonly("input_side", &UNetArchitecture::input_side)
        .def("parameter_count", &UNetArchitecture::parameter_count)
        .def("schedule", [](const UNetArchitecture& a) {
            std::vector<std::pair<std::string, std::vector<std::uint64_t>>> out;
            for (const auto& s : a.schedule()) out.emplace_back(s.name, s.shape);
            return out;
        });

    py::class_<UNetWeights>(m, "UNetWeights")
        .def(py::init([](const UNetArchitecture& arch, const std::vector<std::pair<std::string, FloatArray>>& tensors) {
                 std::vector<Tensor> ts;
                 for (const auto& [name, a] : tensors) ts.push_back(tensor_from(name, a));
                 return UNetWeights(arch, std::move(ts));
             }),
             py::arg("arch"), py::arg("tensors"))
        .def_static("zeros", &UNetWeights::zeros)
        .def_static("random", &UNetWeights::random, py::arg("arch"), py::arg("seed"))
        .def_property_readonly("architecture", &UNetWeights::architecture)
        .def("tensor", [](const UNetWeights& w, const std::string& name) {
            const auto& t = w.tensor(name);
            std::vector<py::ssize_t> shape(t.spec.shape.begin(), t.spec.shape.end());
            FloatArray out(shape);
            std::copy(t.values.begin(), t.values.end(), out.mutable_data());
            return out;
        })
        .def("names", [](const UNetWeights& w) {
            std::vector<std::string> names;
            for (const auto& t : w.tensors()) names.push_back(t.spec.name);
            return names;
        });
    m.def("load_weights", &load_weights, py::arg("path"));
    m.def("save_weights", &save_weights, py::arg("weights"), py::arg("path"));
    m.def("unet_forward", [](const UNetWeights& w, const FloatArray& x) { return array_from(unet_forward(w, map_from(x))); },
          py::arg("weights"), py::arg("input"));
    m.def("conv_transpose3x3",
          [](const FloatArray& x, const std::string& name_w, const FloatArray& w, const FloatArray& b) {
              return array_from(conv_transpose3x3(map_from(x), tensor_from(name_w, w), tensor_from("bias", b)));
          },
          py::arg("input"), py::arg("weight_name"), py::arg("weight"), py::arg("bias"));
    m.def("standardize_log", &standardize_log, py::arg("tile"));

    m.def("run_verification", [](std::uint64_t seed) {
        std::vector<py::tuple> out;
        for (const auto& r : run_verification(seed)) out.push_back(py::make_tuple(r.name, r.passed, r.detail));
        return out;
    }, py::arg("seed") = 1);
}
