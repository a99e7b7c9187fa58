#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ovnlm/cube_io.hpp"
#include "ovnlm/filter.hpp"
#include "ovnlm/metrics.hpp"
#include "ovnlm/noise.hpp"
#include "ovnlm/optimize.hpp"
#include "ovnlm/similarity.hpp"
#include "ovnlm/sure.hpp"

namespace {

using namespace ovnlm;

// Usage problems detected after flag parsing (conflicting or missing choices).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void print_risk(const RiskReport& r) {
    std::cout << "data_term,trace_term,divergence_term,risk\n"
              << fmt(r.data_term) << ',' << fmt(r.trace_term) << ','
              << fmt(r.divergence_term) << ',' << fmt(r.risk) << '\n';
}

void print_quality(const QualityReport& q) {
    std::cout << "psnr_db,ssim_mean";
    for (std::size_t i = 0; i < q.ssim_band.size(); ++i) std::cout << ",ssim_band_" << i;
    std::cout << '\n' << fmt(q.psnr_db) << ',' << fmt(q.ssim_mean);
    for (const double v : q.ssim_band) std::cout << ',' << fmt(v);
    std::cout << '\n';
}

NoiseCovariance with_diag_ridge(const NoiseCovariance& cov, double ridge) {
    if (ridge == 0.0) return cov;
    Eigen::MatrixXd m = cov.entries();
    m += ridge * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    return NoiseCovariance(std::move(m));
}

struct AddNoiseArgs {
    std::string in, out, cov_file;
    std::uint64_t seed = 0;
    double sigma = 0.0, target_psnr = 0.0;
    bool has_sigma = false, has_target = false;
};

int run_add_noise(const AddNoiseArgs& a) {
    const int sources = int(a.has_sigma) + int(a.has_target) + int(!a.cov_file.empty());
    if (sources != 1)
        throw UsageError("add-noise needs exactly one of --sigma, --target-psnr, --cov");

    const SpectralCube clean = read_cube(a.in);
    NoiseCovariance cov = NoiseCovariance::zero(clean.bands());
    if (a.has_sigma) {
        if (a.sigma < 0.0) throw UsageError("--sigma must be >= 0");
        cov = NoiseCovariance::isotropic(clean.bands(), a.sigma * a.sigma);
    } else if (a.has_target) {
        const double s = sigma_for_target_psnr(clean, a.target_psnr);
        cov = NoiseCovariance::isotropic(clean.bands(), s * s);
    } else {
        cov = read_covariance_csv(a.cov_file);
    }

    const SpectralCube noisy = add_gaussian_noise(clean, cov, a.seed);
    write_cube(noisy, a.out);
    std::cout << "input_psnr_db," << fmt(psnr(clean, noisy)) << '\n';
    return 0;
}

struct DenoiseArgs {
    std::string in, out, cov_file, ref, phi = "identity";
    std::string trace_file, counts_file;
    bool estimate_cov = false, no_preselect = false, optimize = false;
    double h = 0.0;
    bool has_h = false;
    double varsigma = 100.0;
    double xi = -1.0;
    double diag_reg = 0.0;
    double kernel_sigma = 1.0;
    std::size_t iter_max = 50;
    std::ptrdiff_t patch_radius = 3;
    PatchKernel kernel = PatchKernel::uniform;
    MetricShape metric_shape = MetricShape::full;
    bool has_metric_shape = false;
};

int run_denoise(const DenoiseArgs& a) {
    if (a.estimate_cov == !a.cov_file.empty())
        throw UsageError("denoise needs exactly one of --cov, --estimate-cov");

    const SpectralCube noisy = read_cube(a.in);
    const NoiseCovariance cov = with_diag_ridge(
        a.estimate_cov ? estimate_noise_covariance_mad(noisy) : read_covariance_csv(a.cov_file),
        a.diag_reg);

    std::optional<CandidateSets> candidates;
    if (!a.no_preselect) {
        SimilarityConfig cfg;
        cfg.varsigma = a.varsigma;
        candidates.emplace(build_candidate_sets(noisy, cov, cfg));
        if (!a.counts_file.empty()) write_cube(candidate_count_cube(*candidates), a.counts_file);
    }
    const CandidateSets* sets = candidates ? &*candidates : nullptr;

    FilterParams params;
    if (a.has_h) {
        params.h = a.h;
        params.patch_radius = a.patch_radius;
        if (a.phi != "identity") params.phi = read_covariance_csv(a.phi).entries();
    } else {
        FilterParams init = default_init(cov, a.patch_radius);
        init.kernel = a.kernel;
        init.kernel_sigma = a.kernel_sigma;
        OptimizerConfig cfg;
        cfg.iter_max = a.iter_max;
        cfg.xi = a.xi;
        if (a.has_metric_shape) cfg.metric_shape = a.metric_shape;
        OptimizeResult result = optimize_params(noisy, cov, init, cfg, sets);
        params = std::move(result.params);
        if (!a.trace_file.empty()) write_trace_csv(result.trace, a.trace_file);
        std::cout << "optimized_h," << fmt(params.h) << "\nstop_reason,"
                  << to_string(result.trace.stop_reason) << '\n';
    }
    params.kernel = a.kernel;
    params.kernel_sigma = a.kernel_sigma;

    auto [restored, risk] = denoise_with_risk(noisy, params, sets, cov);
    write_cube(restored, a.out);
    print_risk(risk);
    if (!a.ref.empty()) print_quality(quality_report(read_cube(a.ref), restored));
    return 0;
}

struct MetricsArgs {
    std::string ref, test;
    double c1 = -1.0, c2 = -1.0;
};

int run_metrics(const MetricsArgs& a) {
    print_quality(quality_report(read_cube(a.ref), read_cube(a.test), a.c1, a.c2));
    return 0;
}

struct EstimateArgs {
    std::string in, out;
};

int run_estimate_noise(const EstimateArgs& a) {
    write_covariance_csv(estimate_noise_covariance_mad(read_cube(a.in)), a.out);
    return 0;
}

struct ConvertArgs {
    std::string to, out;
    std::vector<std::string> in;
};

int run_convert(const ConvertArgs& a) {
    if (a.to == "msc1") {
        std::vector<std::filesystem::path> paths(a.in.begin(), a.in.end());
        write_cube(import_band_stack(paths), a.out);
    } else if (a.to == "pgm") {
        if (a.in.size() != 1) throw UsageError("convert --to pgm takes exactly one --in cube");
        export_band_stack(read_cube(a.in.front()), a.out);
    } else {
        throw UsageError("convert --to must be msc1 or pgm");
    }
    return 0;
}

struct BenchArgs {
    std::string in, out;
    double target_psnr = 19.0;
    std::vector<std::string> variants;
    std::vector<double> varsigma_grid{100.0};
    std::uint64_t seed = 1;
    double h = 0.0;
    bool has_h = false;
    std::ptrdiff_t patch_radius = 3;
    double kernel_sigma = 1.0;
    bool assert_trends = false, omit_timing = false;
};

struct BenchRow {
    std::string variant;
    double varsigma = 0.0;
    double input_psnr = 0.0;
    double output_psnr = 0.0;
    double ssim_mean = 0.0;
    double seconds = 0.0;
    double mean_candidates = 0.0;
};

int run_bench(const BenchArgs& a) {
    if (a.variants.empty()) throw UsageError("bench needs at least one --variants entry");
    for (const std::string& v : a.variants)
        if (v != "nlm" && v != "vnlm-full" && v != "ovnlm")
            throw UsageError("unknown variant '" + v + "' (expected nlm, vnlm-full, ovnlm)");
    if (a.varsigma_grid.empty()) throw UsageError("bench needs a nonempty --varsigma-grid");

    const SpectralCube clean = read_cube(a.in);
    const double sigma = sigma_for_target_psnr(clean, a.target_psnr);
    const NoiseCovariance cov = NoiseCovariance::isotropic(clean.bands(), sigma * sigma);
    const SpectralCube noisy = add_gaussian_noise(clean, cov, a.seed);
    const double input_psnr = psnr(clean, noisy);
    const auto full_size = static_cast<double>(clean.pixel_count());

    FilterParams params = default_init(cov, a.patch_radius);
    params.phi.resize(0, 0);  // bench compares variants under the Euclidean metric
    if (a.has_h) params.h = a.h;

    // The default h assumes unit intra-patch weights summing to (2r+1)^2. The
    // scalar variant runs under the gaussian kernel, whose mass is far smaller,
    // so rescale h to keep the same chi discrimination unless --h was given.
    double nlm_h = params.h;
    if (!a.has_h) {
        double mass = 0.0;
        const double a2 = a.kernel_sigma * a.kernel_sigma;
        for (std::ptrdiff_t dr = -a.patch_radius; dr <= a.patch_radius; ++dr)
            for (std::ptrdiff_t dc = -a.patch_radius; dc <= a.patch_radius; ++dc)
                mass += std::exp(-0.5 * static_cast<double>(dr * dr + dc * dc) / a2) /
                        (2.0 * std::numbers::pi * a2);
        const double window = std::pow(2.0 * static_cast<double>(a.patch_radius) + 1.0, 2.0);
        nlm_h = params.h * std::sqrt(mass / window);
    }

    using clock = std::chrono::steady_clock;
    auto timed = [&](const auto& fn) {
        const auto start = clock::now();
        SpectralCube out = fn();
        const double secs = std::chrono::duration<double>(clock::now() - start).count();
        return std::pair<SpectralCube, double>(std::move(out), secs);
    };

    std::vector<BenchRow> rows;
    auto push_row = [&](const std::string& variant, double varsigma,
                        std::pair<SpectralCube, double> run, double mean_candidates) {
        const QualityReport q = quality_report(clean, run.first);
        rows.push_back({variant, varsigma, input_psnr, q.psnr_db, q.ssim_mean,
                        a.omit_timing ? 0.0 : run.second, mean_candidates});
    };

    for (const std::string& variant : a.variants) {
        if (variant == "nlm") {
            push_row(variant, 0.0, timed([&] {
                         SpectralCube out(noisy.height(), noisy.width(), noisy.bands());
                         for (std::size_t b = 0; b < noisy.bands(); ++b) {
                             SpectralCube band(noisy.height(), noisy.width(), 1);
                             for (std::size_t s = 0; s < noisy.pixel_count(); ++s)
                                 band.samples()[s] = noisy.samples()[s * noisy.bands() + b];
                             const SpectralCube restored = scalar_nlm_denoise(
                                 band, nlm_h, a.kernel_sigma, a.patch_radius);
                             for (std::size_t s = 0; s < noisy.pixel_count(); ++s)
                                 out.samples()[s * noisy.bands() + b] = restored.samples()[s];
                         }
                         return out;
                     }),
                     full_size);
        } else if (variant == "vnlm-full") {
            push_row(variant, 0.0, timed([&] { return vnlm_denoise(noisy, params); }),
                     full_size);
        } else {
            for (const double varsigma : a.varsigma_grid) {
                double mean_candidates = 0.0;
                auto run = timed([&] {
                    SimilarityConfig cfg;
                    cfg.varsigma = varsigma;
                    const CandidateSets sets = build_candidate_sets(noisy, cov, cfg);
                    mean_candidates = sets.mean_size();
                    return vnlm_denoise(noisy, params, sets);
                });
                push_row(variant, varsigma, std::move(run), mean_candidates);
            }
        }
    }

    std::stable_sort(rows.begin(), rows.end(), [](const BenchRow& x, const BenchRow& y) {
        return x.variant != y.variant ? x.variant < y.variant : x.varsigma < y.varsigma;
    });

    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + a.out + " for writing");
    out << "variant,varsigma,input_psnr_db,output_psnr_db,ssim_mean,wall_clock_s,"
           "candidate_mean_size\n";
    for (const BenchRow& r : rows)
        out << r.variant << ',' << fmt(r.varsigma) << ',' << fmt(r.input_psnr) << ','
            << fmt(r.output_psnr) << ',' << fmt(r.ssim_mean) << ',' << fmt(r.seconds) << ','
            << fmt(r.mean_candidates) << '\n';
    out.close();

    if (a.assert_trends) {
        const BenchRow* prev = nullptr;
        for (const BenchRow& r : rows) {
            if (r.variant != "ovnlm") continue;
            if (prev) {
                if (r.output_psnr < prev->output_psnr - 0.1) {
                    std::cerr << "bench: PSNR decreased between varsigma " << prev->varsigma
                              << " and " << r.varsigma << '\n';
                    return 1;
                }
                if (!a.omit_timing && r.seconds < 0.9 * prev->seconds) {
                    std::cerr << "bench: wall clock decreased between varsigma "
                              << prev->varsigma << " and " << r.varsigma << '\n';
                    return 1;
                }
                if (r.mean_candidates < prev->mean_candidates) {
                    std::cerr << "bench: candidate size decreased between varsigma "
                              << prev->varsigma << " and " << r.varsigma << '\n';
                    return 1;
                }
            }
            prev = &r;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Multispectral non-local means denoiser with SURE-driven parameter "
        "selection"};
    app.require_subcommand(1);
    // long-form help only: the short -h would clash with the --h option below
    app.set_help_flag("--help", "print help and exit");

    AddNoiseArgs an;
    auto* add_noise = app.add_subcommand("add-noise", "Inject seeded Gaussian noise");
    add_noise->add_option("--in", an.in, "input cube (msc1)")->required();
    add_noise->add_option("--out", an.out, "output cube (msc1)")->required();
    add_noise->add_option("--seed", an.seed, "RNG seed")->required();
    auto* an_sigma = add_noise->add_option("--sigma", an.sigma, "i.i.d. per-band noise std");
    auto* an_target = add_noise->add_option("--target-psnr", an.target_psnr,
                                            "pick sigma to hit this input PSNR (dB)");
    auto* an_cov = add_noise->add_option("--cov", an.cov_file, "noise covariance CSV");
    an_sigma->excludes(an_target)->excludes(an_cov);
    an_target->excludes(an_cov);

    DenoiseArgs dn;
    auto* denoise = app.add_subcommand(
        "denoise",
        "Filter a noisy cube. Defaults to candidate preselection (varsigma 100) and "
        "SURE-optimized parameters; pass --h for a fixed-parameter run.");
    denoise->set_help_flag("--help", "print help and exit");
    denoise->add_option("--in", dn.in, "noisy cube (msc1)")->required();
    denoise->add_option("--out", dn.out, "restored cube (msc1)")->required();
    denoise->add_option("--patch-radius", dn.patch_radius, "patch radius r (window 2r+1)")
        ->default_val(3);
    auto* dn_vs = denoise->add_option("--varsigma", dn.varsigma,
                                      "similarity cutoff parameter (> 1)");
    auto* dn_nop = denoise->add_flag("--no-preselect", dn.no_preselect,
                                     "average over the full domain");
    dn_vs->excludes(dn_nop);
    auto* dn_opt = denoise->add_flag("--optimize", dn.optimize,
                                     "tune (h, Phi) by SURE descent (default when --h absent)");
    auto* dn_h = denoise->add_option("--h", dn.h, "fixed smoothing parameter");
    dn_h->excludes(dn_opt);
    auto* dn_phi = denoise->add_option("--phi", dn.phi,
                                       "metric for fixed runs: 'identity' or a CSV matrix");
    dn_phi->needs(dn_h);
    denoise->add_option("--iter-max", dn.iter_max, "optimizer iteration cap")->default_val(50);
    denoise->add_option("--xi", dn.xi,
                        "risk-decrease stopping threshold (default 1e-4 x initial risk)");
    const std::map<std::string, MetricShape> shapes{{"identity", MetricShape::identity},
                                                    {"diagonal", MetricShape::diagonal},
                                                    {"full", MetricShape::full}};
    auto* dn_shape =
        denoise
            ->add_option("--metric-shape", dn.metric_shape,
                         "which part of Phi the optimizer varies (default: full for P <= 8, "
                         "else diagonal)")
            ->transform(CLI::CheckedTransformer(shapes, CLI::ignore_case));
    const std::map<std::string, PatchKernel> kernels{{"uniform", PatchKernel::uniform},
                                                     {"gaussian", PatchKernel::gaussian}};
    denoise->add_option("--kernel", dn.kernel, "intra-patch kernel (default uniform)")
        ->transform(CLI::CheckedTransformer(kernels, CLI::ignore_case));
    denoise->add_option("--kernel-sigma", dn.kernel_sigma, "gaussian kernel std a")
        ->default_val(1.0);
    auto* dn_cov = denoise->add_option("--cov", dn.cov_file, "noise covariance CSV");
    auto* dn_est = denoise->add_flag("--estimate-cov", dn.estimate_cov,
                                     "estimate the covariance from the input (MAD)");
    dn_cov->excludes(dn_est);
    denoise->add_option("--diag-reg", dn.diag_reg,
                        "ridge added to the covariance diagonal before use")
        ->default_val(0.0);
    denoise->add_option("--ref", dn.ref, "clean reference cube; prints PSNR/SSIM");
    auto* dn_trace = denoise->add_option("--trace", dn.trace_file, "optimization trace CSV");
    dn_trace->excludes(dn_h);
    auto* dn_counts = denoise->add_option("--dump-candidate-counts", dn.counts_file,
                                          "write per-pixel candidate counts (msc1)");
    dn_counts->excludes(dn_nop);

    MetricsArgs mt;
    auto* metrics = app.add_subcommand("metrics", "PSNR and global SSIM of a cube pair");
    metrics->add_option("--ref", mt.ref, "reference cube")->required();
    metrics->add_option("--test", mt.test, "cube under test")->required();
    metrics->add_option("--c1", mt.c1, "SSIM c1 override");
    metrics->add_option("--c2", mt.c2, "SSIM c2 override");

    EstimateArgs es;
    auto* estimate = app.add_subcommand("estimate-noise", "MAD noise covariance to CSV");
    estimate->add_option("--in", es.in, "input cube")->required();
    estimate->add_option("--out", es.out, "covariance CSV")->required();

    ConvertArgs cv;
    auto* convert = app.add_subcommand("convert", "PGM stack <-> msc1 cube");
    convert->add_option("--to", cv.to, "target format: msc1 or pgm")->required();
    convert->add_option("--in", cv.in, "input file(s); one PGM per band for msc1")
        ->required()
        ->expected(-1);
    convert->add_option("--out", cv.out, "output cube path, or PGM filename prefix")
        ->required();

    BenchArgs bn;
    auto* bench = app.add_subcommand(
        "bench",
        "Variant sweep on a clean cube: inject noise (shared seed), denoise, score. "
        "wall_clock_s covers the denoise work only (candidate preselection included; "
        "I/O, noise injection and scoring excluded).");
    bench->set_help_flag("--help", "print help and exit");
    bench->add_option("--in", bn.in, "clean cube (msc1)")->required();
    bench->add_option("--out", bn.out, "bench rows CSV")->required();
    bench->add_option("--target-psnr", bn.target_psnr, "input PSNR to inject (dB)")
        ->default_val(19.0);
    bench->add_option("--variants", bn.variants, "comma list of nlm, vnlm-full, ovnlm")
        ->required()
        ->delimiter(',');
    bench->add_option("--varsigma-grid", bn.varsigma_grid, "comma list of varsigma values")
        ->delimiter(',');
    bench->add_option("--seed", bn.seed, "noise seed")->default_val(1);
    auto* bn_h = bench->add_option("--h", bn.h, "override the default smoothing parameter");
    bench->add_option("--patch-radius", bn.patch_radius, "patch radius")->default_val(3);
    bench->add_option("--kernel-sigma", bn.kernel_sigma, "gaussian kernel std for nlm")
        ->default_val(1.0);
    bench->add_flag("--assert-trends", bn.assert_trends,
                    "exit nonzero unless PSNR/time/candidates are nondecreasing in varsigma");
    bench->add_flag("--omit-timing", bn.omit_timing,
                    "write 0 for wall_clock_s (byte-stable CSVs for determinism checks)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    an.has_sigma = an_sigma->count() > 0;
    an.has_target = an_target->count() > 0;
    dn.has_h = dn_h->count() > 0;
    dn.has_metric_shape = dn_shape->count() > 0;
    bn.has_h = bn_h->count() > 0;

    try {
        if (*add_noise) return run_add_noise(an);
        if (*denoise) return run_denoise(dn);
        if (*metrics) return run_metrics(mt);
        if (*estimate) return run_estimate_noise(es);
        if (*convert) return run_convert(cv);
        if (*bench) return run_bench(bn);
    } catch (const UsageError& e) {
        std::cerr << "ovnlm: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "ovnlm: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
