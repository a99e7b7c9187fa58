#include "ovnlm/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace ovnlm {

const char* to_string(StopReason reason) {
    switch (reason) {
        case StopReason::iter_max: return "iter_max";
        case StopReason::risk_plateau: return "risk_plateau";
        case StopReason::line_search_failure: return "line_search_failure";
    }
    return "unknown";
}

MetricShape default_metric_shape(std::size_t bands) {
    return bands <= 8 ? MetricShape::full : MetricShape::diagonal;
}

namespace {

// Maps the unconstrained vector x to Theta and back. Layout: x[0] = alpha with
// h = exp(alpha); for diagonal/full shapes the remaining entries are the
// lower-triangular factor L (row-major), Phi = LL^T + 1e-8*(trace(LL^T)/P)*Id.
class Parameterization {
public:
    Parameterization(const FilterParams& init, MetricShape shape, std::size_t bands)
        : base_(init), shape_(shape), bands_(static_cast<Eigen::Index>(bands)) {
        base_.metric_shape = shape;
        Eigen::MatrixXd phi0 = init.phi.size() == 0
                                   ? Eigen::MatrixXd::Identity(bands_, bands_)
                                   : init.phi;
        switch (shape_) {
            case MetricShape::identity:
                dim_ = 1;
                break;
            case MetricShape::diagonal:
                dim_ = 1 + static_cast<std::size_t>(bands_);
                break;
            case MetricShape::full:
                dim_ = 1 + static_cast<std::size_t>(bands_ * (bands_ + 1) / 2);
                break;
        }
        x0_.resize(static_cast<Eigen::Index>(dim_));
        x0_(0) = std::log(init.h);
        if (shape_ == MetricShape::diagonal) {
            for (Eigen::Index i = 0; i < bands_; ++i)
                x0_(1 + i) = std::sqrt(std::max(phi0(i, i), 0.0));
        } else if (shape_ == MetricShape::full) {
            Eigen::MatrixXd l = lower_factor(phi0);
            Eigen::Index k = 1;
            for (Eigen::Index i = 0; i < bands_; ++i)
                for (Eigen::Index j = 0; j <= i; ++j) x0_(k++) = l(i, j);
        }
    }

    std::size_t dim() const { return dim_; }
    const Eigen::VectorXd& x0() const { return x0_; }

    FilterParams params(const Eigen::VectorXd& x) const {
        FilterParams p = base_;
        p.h = std::exp(std::clamp(x(0), -700.0, 700.0));
        if (shape_ != MetricShape::identity) {
            Eigen::MatrixXd l = Eigen::MatrixXd::Zero(bands_, bands_);
            if (shape_ == MetricShape::diagonal) {
                for (Eigen::Index i = 0; i < bands_; ++i) l(i, i) = x(1 + i);
            } else {
                Eigen::Index k = 1;
                for (Eigen::Index i = 0; i < bands_; ++i)
                    for (Eigen::Index j = 0; j <= i; ++j) l(i, j) = x(k++);
            }
            Eigen::MatrixXd phi = l * l.transpose();
            const double eps = 1e-8 * phi.trace() / static_cast<double>(bands_);
            phi += std::max(eps, 0.0) * Eigen::MatrixXd::Identity(bands_, bands_);
            p.phi = std::move(phi);
        }
        return p;
    }

    // Scale hint for finite-difference steps per component.
    double fd_reference(const Eigen::VectorXd& x, std::size_t i) const {
        if (i == 0) return 1.0;  // alpha lives on a log scale; absolute steps
        double l2 = 0.0;
        for (Eigen::Index k = 1; k < x.size(); ++k) l2 += x(k) * x(k);
        const double rms = std::sqrt(l2 / static_cast<double>(x.size() - 1));
        return std::abs(x(static_cast<Eigen::Index>(i))) + std::max(rms, 1e-8);
    }

private:
    static Eigen::MatrixXd lower_factor(const Eigen::MatrixXd& phi) {
        const Eigen::Index p = phi.rows();
        const double scale = std::max(phi.trace() / static_cast<double>(p), 0.0);
        for (double ridge : {0.0, 1e-12, 1e-10, 1e-8}) {
            Eigen::LLT<Eigen::MatrixXd> llt(
                phi + ridge * std::max(scale, 1.0) * Eigen::MatrixXd::Identity(p, p));
            if (llt.info() == Eigen::Success) return llt.matrixL();
        }
        Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p, p);
        for (Eigen::Index i = 0; i < p; ++i) l(i, i) = std::sqrt(std::max(phi(i, i), 0.0));
        return l;
    }

    FilterParams base_;
    MetricShape shape_;
    Eigen::Index bands_;
    std::size_t dim_ = 1;
    Eigen::VectorXd x0_;
};

}  // namespace

OptimizeResult optimize_params(const SpectralCube& noisy, const NoiseCovariance& cov,
                               const FilterParams& init, const OptimizerConfig& cfg,
                               const CandidateSets* candidates) {
    init.validate(noisy.bands());
    if (cfg.iter_max < 1)
        throw std::invalid_argument("OptimizerConfig: iter_max must be >= 1");
    if (cfg.xi >= 0.0 && !std::isfinite(cfg.xi))
        throw std::invalid_argument("OptimizerConfig: xi must be finite");

    const MetricShape shape = cfg.metric_shape.value_or(default_metric_shape(noisy.bands()));
    const Parameterization par(init, shape, noisy.bands());
    const auto n = static_cast<Eigen::Index>(par.dim());

    auto risk_at = [&](const Eigen::VectorXd& at) {
        const FilterParams p = par.params(at);
        return (candidates ? sure_risk(noisy, p, *candidates, cov) : sure_risk(noisy, p, cov))
            .risk;
    };

    Eigen::VectorXd x = par.x0();
    double f = risk_at(x);
    if (!std::isfinite(f))
        throw std::runtime_error("optimize_params: risk is not finite at the initial Theta");

    const double xi = cfg.xi >= 0.0 ? cfg.xi : 1e-4 * std::max(std::abs(f), 1e-12);

    OptimizationTrace trace;
    auto record = [&](std::size_t iter, const Eigen::VectorXd& xv, double fv) {
        const FilterParams p = par.params(xv);
        const Eigen::Index pb = static_cast<Eigen::Index>(noisy.bands());
        trace.points.push_back({iter, p.h,
                                p.phi.size() == 0 ? Eigen::MatrixXd::Identity(pb, pb) : p.phi,
                                fv});
    };
    record(0, x, f);

    auto gradient = [&](const Eigen::VectorXd& at) {
        Eigen::VectorXd g(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double step = cfg.fd_step * par.fd_reference(at, static_cast<std::size_t>(i));
            Eigen::VectorXd hi = at, lo = at;
            hi(i) += step;
            lo(i) -= step;
            g(i) = (risk_at(hi) - risk_at(lo)) / (2.0 * step);
        }
        return g;
    };

    Eigen::VectorXd g = gradient(x);
    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
    trace.stop_reason = StopReason::iter_max;
    bool first_update = true;

    for (std::size_t iter = 1; iter <= cfg.iter_max; ++iter) {
        if (g.cwiseAbs().maxCoeff() <= 1e-14 * (std::abs(f) + 1.0)) {
            trace.stop_reason = StopReason::risk_plateau;
            break;
        }
        Eigen::VectorXd d = -(hinv * g);
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            hinv.setIdentity();
            first_update = true;
            d = -g;
            slope = g.dot(d);
        }

        // Never move any coordinate by more than 10 in one step (h factor e^10);
        // on the very first step be conservative until the Hessian scale is known.
        double t = std::min(1.0, 10.0 / d.cwiseAbs().maxCoeff());
        if (trace.points.size() == 1) t = std::min(t, 0.5 / d.cwiseAbs().maxCoeff());

        bool accepted = false;
        Eigen::VectorXd xn;
        double fn = f;
        for (std::size_t bt = 0; bt <= cfg.max_backtracks; ++bt) {
            xn = x + t * d;
            fn = risk_at(xn);
            if (std::isfinite(fn) && fn <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= cfg.line_search_shrink;
        }
        if (!accepted) {
            trace.stop_reason = StopReason::line_search_failure;
            break;
        }

        record(iter, xn, fn);
        const double decrease = f - fn;
        if (decrease <= xi) {
            x = xn;
            f = fn;
            trace.stop_reason = StopReason::risk_plateau;
            break;
        }

        Eigen::VectorXd gn = gradient(xn);
        const Eigen::VectorXd s = xn - x;
        const Eigen::VectorXd y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (first_update) {
                hinv *= sy / y.squaredNorm();
                first_update = false;
            }
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd outer =
                Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
            hinv = (outer * hinv * outer.transpose() + rho * s * s.transpose()).eval();
        }
        x = xn;
        f = fn;
        g = std::move(gn);
    }

    return {par.params(x), std::move(trace)};
}

FilterParams default_init(const NoiseCovariance& cov, std::ptrdiff_t patch_radius) {
    FilterParams params;
    params.patch_radius = patch_radius;
    const auto p = static_cast<Eigen::Index>(cov.bands());
    const double tr = cov.trace();
    const double window = static_cast<double>((2 * patch_radius + 1) * (2 * patch_radius + 1));
    if (tr > 0.0) {
        params.h = std::sqrt(tr / static_cast<double>(p)) * window;
        params.phi =
            (cov.entries().diagonal() * (static_cast<double>(p) / tr)).asDiagonal();
    } else {
        std::cerr << "ovnlm: warning: zero-trace noise covariance, h falls back to 1.0\n";
        params.h = 1.0;
        params.phi = Eigen::MatrixXd::Identity(p, p);
    }
    return params;
}

void write_trace_csv(const OptimizationTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const auto p = trace.points.empty() ? 0 : trace.points.front().phi.rows();
    out << "iter,h";
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) out << ",phi_" << i << "_" << j;
    out << ",risk\n";
    char buf[32];
    auto field = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << ',' << buf;
    };
    for (const TracePoint& point : trace.points) {
        out << point.iter;
        field(point.h);
        for (Eigen::Index i = 0; i < p; ++i)
            for (Eigen::Index j = 0; j < p; ++j) field(point.phi(i, j));
        field(point.risk);
        out << '\n';
    }
}

}  // namespace ovnlm
