#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <stdexcept>

#include "ovnlm/cube_io.hpp"
#include "ovnlm/filter.hpp"
#include "ovnlm/metrics.hpp"
#include "ovnlm/noise.hpp"
#include "ovnlm/optimize.hpp"
#include "ovnlm/similarity.hpp"
#include "ovnlm/sure.hpp"

namespace py = pybind11;
using namespace ovnlm;

namespace {

SpectralCube cube_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 3)
        throw std::invalid_argument("expected an (H, L, P) float array");
    const auto h = static_cast<std::size_t>(arr.shape(0));
    const auto l = static_cast<std::size_t>(arr.shape(1));
    const auto p = static_cast<std::size_t>(arr.shape(2));
    std::vector<double> samples(static_cast<std::size_t>(arr.size()));
    std::memcpy(samples.data(), arr.data(), samples.size() * sizeof(double));
    return SpectralCube::from_samples(h, l, p, std::move(samples));
}

py::array_t<double> cube_to_array(const SpectralCube& cube) {
    py::array_t<double> arr({cube.height(), cube.width(), cube.bands()});
    std::memcpy(arr.mutable_data(), cube.samples().data(),
                cube.sample_count() * sizeof(double));
    return arr;
}

NoiseCovariance cov_from_matrix(const Eigen::MatrixXd& m) { return NoiseCovariance(m); }

FilterParams params_from_kwargs(double h, const std::optional<Eigen::MatrixXd>& phi,
                                std::ptrdiff_t patch_radius, const std::string& kernel,
                                double kernel_sigma) {
    FilterParams params;
    params.h = h;
    if (phi) params.phi = *phi;
    params.patch_radius = patch_radius;
    if (kernel == "uniform")
        params.kernel = PatchKernel::uniform;
    else if (kernel == "gaussian")
        params.kernel = PatchKernel::gaussian;
    else
        throw std::invalid_argument("kernel must be 'uniform' or 'gaussian'");
    params.kernel_sigma = kernel_sigma;
    return params;
}

std::optional<CandidateSets> maybe_candidates(const SpectralCube& cube,
                                              const Eigen::MatrixXd& cov, double varsigma) {
    if (varsigma <= 0.0) return std::nullopt;  // sentinel: no preselection
    SimilarityConfig cfg;
    cfg.varsigma = varsigma;
    return build_candidate_sets(cube, NoiseCovariance(cov), cfg);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multispectral non-local means denoising core";

    m.def("read_cube",
          [](const std::filesystem::path& path) { return cube_to_array(read_cube(path)); },
          py::arg("path"));

    m.def("write_cube",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cube,
             const std::filesystem::path& path) { write_cube(cube_from_array(cube), path); },
          py::arg("cube"), py::arg("path"));

    m.def("add_gaussian_noise",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cube,
             const Eigen::MatrixXd& cov, std::uint64_t seed) {
              return cube_to_array(
                  add_gaussian_noise(cube_from_array(cube), cov_from_matrix(cov), seed));
          },
          py::arg("cube"), py::arg("cov"), py::arg("seed"));

    m.def("sigma_for_target_psnr",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cube,
             double target_db) {
              return sigma_for_target_psnr(cube_from_array(cube), target_db);
          },
          py::arg("cube"), py::arg("target_db"));

    m.def("estimate_noise_covariance",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cube) {
              return estimate_noise_covariance_mad(cube_from_array(cube)).entries();
          },
          py::arg("cube"));

    m.def("psnr",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& ref,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& test) {
              return psnr(cube_from_array(ref), cube_from_array(test));
          },
          py::arg("reference"), py::arg("test"));

    m.def("ssim",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& ref,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& test,
             double c1, double c2) {
              return ssim_global(cube_from_array(ref), cube_from_array(test), c1, c2);
          },
          py::arg("reference"), py::arg("test"), py::arg("c1") = -1.0, py::arg("c2") = -1.0);

    m.def("denoise",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& noisy,
             double h, const Eigen::MatrixXd& cov, const std::optional<Eigen::MatrixXd>& phi,
             std::ptrdiff_t patch_radius, const std::string& kernel, double kernel_sigma,
             double varsigma) {
              const SpectralCube cube = cube_from_array(noisy);
              const FilterParams params =
                  params_from_kwargs(h, phi, patch_radius, kernel, kernel_sigma);
              const auto sets = maybe_candidates(cube, cov, varsigma);
              auto [restored, risk] = denoise_with_risk(
                  cube, params, sets ? &*sets : nullptr, NoiseCovariance(cov));
              return py::make_tuple(cube_to_array(restored),
                                    py::dict(py::arg("data_term") = risk.data_term,
                                             py::arg("trace_term") = risk.trace_term,
                                             py::arg("divergence_term") = risk.divergence_term,
                                             py::arg("risk") = risk.risk));
          },
          py::arg("noisy"), py::arg("h"), py::arg("cov"), py::arg("phi") = std::nullopt,
          py::arg("patch_radius") = 3, py::arg("kernel") = "uniform",
          py::arg("kernel_sigma") = 1.0, py::arg("varsigma") = 100.0);

    m.def("sure_risk",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& noisy,
             double h, const Eigen::MatrixXd& cov, const std::optional<Eigen::MatrixXd>& phi,
             std::ptrdiff_t patch_radius, double varsigma) {
              const SpectralCube cube = cube_from_array(noisy);
              FilterParams params;
              params.h = h;
              if (phi) params.phi = *phi;
              params.patch_radius = patch_radius;
              const auto sets = maybe_candidates(cube, cov, varsigma);
              const RiskReport r = sets ? sure_risk(cube, params, *sets, NoiseCovariance(cov))
                                        : sure_risk(cube, params, NoiseCovariance(cov));
              return py::dict(py::arg("data_term") = r.data_term,
                              py::arg("trace_term") = r.trace_term,
                              py::arg("divergence_term") = r.divergence_term,
                              py::arg("risk") = r.risk);
          },
          py::arg("noisy"), py::arg("h"), py::arg("cov"), py::arg("phi") = std::nullopt,
          py::arg("patch_radius") = 3, py::arg("varsigma") = 100.0);

    m.def("default_init",
          [](const Eigen::MatrixXd& cov, std::ptrdiff_t patch_radius) {
              const FilterParams params = default_init(NoiseCovariance(cov), patch_radius);
              return py::make_tuple(params.h, params.phi);
          },
          py::arg("cov"), py::arg("patch_radius") = 3);

    m.def("optimize",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& noisy,
             const Eigen::MatrixXd& cov, std::ptrdiff_t patch_radius, double varsigma,
             std::size_t iter_max, double xi, const std::string& metric_shape) {
              const SpectralCube cube = cube_from_array(noisy);
              const NoiseCovariance noise_cov{cov};
              FilterParams init = default_init(noise_cov, patch_radius);
              OptimizerConfig cfg;
              cfg.iter_max = iter_max;
              cfg.xi = xi;
              if (metric_shape == "identity")
                  cfg.metric_shape = MetricShape::identity;
              else if (metric_shape == "diagonal")
                  cfg.metric_shape = MetricShape::diagonal;
              else if (metric_shape == "full")
                  cfg.metric_shape = MetricShape::full;
              else if (!metric_shape.empty())
                  throw std::invalid_argument(
                      "metric_shape must be '', 'identity', 'diagonal' or 'full'");
              const auto sets = maybe_candidates(cube, cov, varsigma);
              const OptimizeResult result =
                  optimize_params(cube, noise_cov, init, cfg, sets ? &*sets : nullptr);
              py::list trace;
              for (const TracePoint& pt : result.trace.points)
                  trace.append(py::dict(py::arg("iter") = pt.iter, py::arg("h") = pt.h,
                                        py::arg("risk") = pt.risk));
              return py::make_tuple(result.params.h, result.params.phi, trace,
                                    std::string(to_string(result.trace.stop_reason)));
          },
          py::arg("noisy"), py::arg("cov"), py::arg("patch_radius") = 3,
          py::arg("varsigma") = 100.0, py::arg("iter_max") = 50, py::arg("xi") = -1.0,
          py::arg("metric_shape") = "");

    m.def("candidate_counts",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cube,
             const Eigen::MatrixXd& cov, double varsigma) {
              SimilarityConfig cfg;
              cfg.varsigma = varsigma;
              const SpectralCube c = cube_from_array(cube);
              return cube_to_array(
                  candidate_count_cube(build_candidate_sets(c, NoiseCovariance(cov), cfg)));
          },
          py::arg("cube"), py::arg("cov"), py::arg("varsigma") = 100.0);
}
