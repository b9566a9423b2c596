#include "lupi/qp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace lupi {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

bool finite_bound(double v) { return std::isfinite(v); }

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double fraction_to_boundary(const VectorXd& value, const VectorXd& step, const std::vector<bool>& mask)
{
    double alpha = 1.0;
    for (Index i = 0; i < value.size(); ++i) {
        if (mask[static_cast<std::size_t>(i)] && step(i) < 0.0) {
            alpha = std::min(alpha, -value(i) / step(i));
        }
    }
    return alpha;
}

// Necessary condition for feasibility: every equality row must be reachable
// inside the box.
bool rows_reachable(const QpProblem& p)
{
    for (Index r = 0; r < p.num_equalities(); ++r) {
        double lo = 0.0;
        double hi = 0.0;
        double scale = std::abs(p.b_eq(r));
        for (Index j = 0; j < p.size(); ++j) {
            const double a = p.A_eq(r, j);
            if (a == 0.0) {
                continue;
            }
            const double at_lower = a * p.lower(j);
            const double at_upper = a * p.upper(j);
            lo += std::min(at_lower, at_upper);
            hi += std::max(at_lower, at_upper);
            if (std::isfinite(at_lower)) scale = std::max(scale, std::abs(at_lower));
            if (std::isfinite(at_upper)) scale = std::max(scale, std::abs(at_upper));
        }
        const double slack = 1e-9 * std::max(1.0, scale);
        if (p.b_eq(r) < lo - slack || p.b_eq(r) > hi + slack) {
            return false;
        }
    }
    return true;
}

bool convex_enough(const MatrixXd& H)
{
    if (H.rows() == 0) {
        return true;
    }
    const double norm = H.cwiseAbs().rowwise().sum().maxCoeff();
    if (norm == 0.0) {
        return true;
    }
    MatrixXd shifted = H;
    shifted.diagonal().array() += 2e-8 * norm;
    Eigen::LLT<MatrixXd> llt(shifted);
    return llt.info() == Eigen::Success;
}

QpSolution infeasible_result(const QpProblem& p)
{
    QpSolution s;
    s.x = p.lower.cwiseMax(p.upper.cwiseMin(VectorXd::Zero(p.size())));
    s.eq_multipliers = VectorXd::Zero(p.num_equalities());
    s.lower_multipliers = VectorXd::Zero(p.size());
    s.upper_multipliers = VectorXd::Zero(p.size());
    s.objective = qp_objective(p, s.x);
    s.kkt_residual = kkt_residual(p, s);
    s.status = QpStatus::Infeasible;
    return s;
}

// Bounded least squares on the equality rows. Zero residual iff feasible.
bool equalities_attainable(const QpProblem& p, const QpSettings& settings)
{
    QpProblem ls;
    ls.H = p.A_eq.transpose() * p.A_eq;
    ls.g = -p.A_eq.transpose() * p.b_eq;
    ls.A_eq = MatrixXd::Zero(0, p.size());
    ls.b_eq = VectorXd::Zero(0);
    ls.lower = p.lower;
    ls.upper = p.upper;
    QpSettings inner = settings;
    inner.check_convexity = false;
    inner.max_iterations = std::max(settings.max_iterations, 100);
    const QpSolution sol = solve(ls, inner);
    const double violation = inf_norm(p.A_eq * sol.x - p.b_eq);
    return violation <= 1e-6 * std::max(1.0, inf_norm(p.b_eq));
}

// Interior-point iterations on a problem with no fixed variables.
class InteriorPoint {
public:
    InteriorPoint(const QpProblem& original, const QpSettings& settings)
        : orig_(original), settings_(settings)
    {
        scale_problem();
    }

    QpSolution run();

private:
    struct Direction {
        VectorXd dx, dy, dzl, dzu;
    };

    void scale_problem();
    void initial_point();
    QpSolution unscaled() const;
    double scaled_residual() const;
    Direction newton(const VectorXd& rd, const VectorXd& rp, const VectorXd& rcl, const VectorXd& rcu) const;

    const QpProblem& orig_;
    QpSettings settings_;

    // Scaled problem: x = col_scale .* x_s, rows of A multiplied by row_scale,
    // objective multiplied by obj_scale.
    MatrixXd H_;
    VectorXd g_;
    MatrixXd A_;
    VectorXd b_;
    VectorXd l_, u_;
    VectorXd col_scale_, row_scale_;
    double obj_scale_ = 1.0;
    std::vector<bool> has_l_, has_u_;
    Index bound_count_ = 0;

    VectorXd x_, y_, zl_, zu_;

    Eigen::LLT<MatrixXd> kkt_;
    Eigen::LDLT<MatrixXd> schur_;
    MatrixXd minv_at_;
};

void InteriorPoint::scale_problem()
{
    const Index n = orig_.size();
    const Index m = orig_.num_equalities();
    col_scale_ = VectorXd::Ones(n);
    has_l_.assign(static_cast<std::size_t>(n), false);
    has_u_.assign(static_cast<std::size_t>(n), false);
    for (Index i = 0; i < n; ++i) {
        const bool lo = finite_bound(orig_.lower(i));
        const bool hi = finite_bound(orig_.upper(i));
        has_l_[static_cast<std::size_t>(i)] = lo;
        has_u_[static_cast<std::size_t>(i)] = hi;
        bound_count_ += (lo ? 1 : 0) + (hi ? 1 : 0);
        if (lo && hi) {
            col_scale_(i) = orig_.upper(i) - orig_.lower(i);
        }
    }

    H_ = col_scale_.asDiagonal() * orig_.H * col_scale_.asDiagonal();
    g_ = col_scale_.cwiseProduct(orig_.g);
    A_ = orig_.A_eq * col_scale_.asDiagonal();
    row_scale_ = VectorXd::Ones(m);
    for (Index r = 0; r < m; ++r) {
        const double norm = A_.row(r).cwiseAbs().maxCoeff();
        if (norm > 0.0) {
            row_scale_(r) = 1.0 / norm;
        }
    }
    A_ = row_scale_.asDiagonal() * A_;
    b_ = row_scale_.cwiseProduct(orig_.b_eq);

    const double magnitude = std::max(H_.size() ? H_.cwiseAbs().maxCoeff() : 0.0, inf_norm(g_));
    obj_scale_ = magnitude > 0.0 ? 1.0 / magnitude : 1.0;
    H_ *= obj_scale_;
    g_ *= obj_scale_;

    l_ = orig_.lower.cwiseQuotient(col_scale_);
    u_ = orig_.upper.cwiseQuotient(col_scale_);
}

void InteriorPoint::initial_point()
{
    const Index n = H_.rows();
    const Index m = A_.rows();

    // Regularized equality-constrained minimizer, then pushed inside the box.
    MatrixXd kkt = MatrixXd::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = H_ + MatrixXd::Identity(n, n);
    kkt.topRightCorner(n, m) = -A_.transpose();
    kkt.bottomLeftCorner(m, n) = A_;
    kkt.bottomRightCorner(m, m).diagonal().setConstant(1e-8);
    VectorXd rhs(n + m);
    rhs << -g_, b_;
    VectorXd sol = kkt.partialPivLu().solve(rhs);
    x_ = sol.head(n);
    if (!x_.allFinite()) {
        x_.setZero();
    }
    y_ = VectorXd::Zero(m);

    const double spread = std::max(1.0, inf_norm(x_));
    for (Index i = 0; i < n; ++i) {
        const bool lo = has_l_[static_cast<std::size_t>(i)];
        const bool hi = has_u_[static_cast<std::size_t>(i)];
        if (lo && hi) {
            const double width = u_(i) - l_(i);
            x_(i) = std::clamp(x_(i), l_(i) + 0.1 * width, u_(i) - 0.1 * width);
        } else if (lo) {
            x_(i) = std::max(x_(i), l_(i) + 0.1 * spread);
        } else if (hi) {
            x_(i) = std::min(x_(i), u_(i) - 0.1 * spread);
        }
    }

    zl_ = VectorXd::Zero(n);
    zu_ = VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
        if (has_l_[static_cast<std::size_t>(i)]) zl_(i) = 1.0;
        if (has_u_[static_cast<std::size_t>(i)]) zu_(i) = 1.0;
    }
}

QpSolution InteriorPoint::unscaled() const
{
    QpSolution s;
    s.x = col_scale_.cwiseProduct(x_);
    s.eq_multipliers = row_scale_.cwiseProduct(y_) / obj_scale_;
    s.lower_multipliers = zl_.cwiseQuotient(col_scale_) / obj_scale_;
    s.upper_multipliers = zu_.cwiseQuotient(col_scale_) / obj_scale_;
    s.objective = qp_objective(orig_, s.x);
    s.kkt_residual = kkt_residual(orig_, s);
    return s;
}

// Same measure on the internally scaled problem, where the objective and the
// box widths are O(1). Keeps accuracy of x independent of the caller's units.
double InteriorPoint::scaled_residual() const
{
    QpProblem p;
    p.H = H_;
    p.g = g_;
    p.A_eq = A_;
    p.b_eq = b_;
    p.lower = l_;
    p.upper = u_;
    QpSolution s;
    s.x = x_;
    s.eq_multipliers = y_;
    s.lower_multipliers = zl_;
    s.upper_multipliers = zu_;
    return kkt_residual(p, s);
}

InteriorPoint::Direction InteriorPoint::newton(const VectorXd& rd, const VectorXd& rp, const VectorXd& rcl,
                                               const VectorXd& rcu) const
{
    const Index n = H_.rows();
    VectorXd rhs = -rd;
    for (Index i = 0; i < n; ++i) {
        if (has_l_[static_cast<std::size_t>(i)]) rhs(i) += rcl(i) / (x_(i) - l_(i));
        if (has_u_[static_cast<std::size_t>(i)]) rhs(i) -= rcu(i) / (u_(i) - x_(i));
    }
    Direction d;
    const VectorXd w = kkt_.solve(rhs);
    if (A_.rows() > 0) {
        d.dy = schur_.solve(-rp - A_ * w);
        d.dx = w + minv_at_ * d.dy;
    } else {
        d.dy = VectorXd::Zero(0);
        d.dx = w;
    }
    d.dzl = VectorXd::Zero(n);
    d.dzu = VectorXd::Zero(n);
    for (Index i = 0; i < n; ++i) {
        if (has_l_[static_cast<std::size_t>(i)]) d.dzl(i) = (rcl(i) - zl_(i) * d.dx(i)) / (x_(i) - l_(i));
        if (has_u_[static_cast<std::size_t>(i)]) d.dzu(i) = (rcu(i) + zu_(i) * d.dx(i)) / (u_(i) - x_(i));
    }
    return d;
}

QpSolution InteriorPoint::run()
{
    const Index n = H_.rows();
    const Index m = A_.rows();
    initial_point();

    const double trace = H_.trace();
    const double base_reg = 1e-10 * std::max(trace / static_cast<double>(std::max<Index>(n, 1)), 1e-6);

    QpSolution best;
    int stalled = 0;
    for (int iter = 0;; ++iter) {
        QpSolution current = unscaled();
        current.iterations = iter;
        if (best.x.size() == 0 ||
            (std::isfinite(current.kkt_residual) && current.kkt_residual < best.kkt_residual)) {
            best = current;
        }
        if (current.kkt_residual <= settings_.tolerance && scaled_residual() <= settings_.tolerance) {
            best = current;
            best.status = QpStatus::Optimal;
            return best;
        }
        if (iter >= settings_.max_iterations || stalled >= 5 || !x_.allFinite()) {
            best.status = QpStatus::MaxIterations;
            best.iterations = iter;
            return best;
        }

        VectorXd sl = VectorXd::Zero(n);
        VectorXd su = VectorXd::Zero(n);
        VectorXd diag = VectorXd::Zero(n);
        double mu = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (has_l_[static_cast<std::size_t>(i)]) {
                sl(i) = x_(i) - l_(i);
                diag(i) += zl_(i) / sl(i);
                mu += sl(i) * zl_(i);
            }
            if (has_u_[static_cast<std::size_t>(i)]) {
                su(i) = u_(i) - x_(i);
                diag(i) += zu_(i) / su(i);
                mu += su(i) * zu_(i);
            }
        }
        mu = bound_count_ > 0 ? mu / static_cast<double>(bound_count_) : 0.0;

        const VectorXd rd = H_ * x_ + g_ - A_.transpose() * y_ - zl_ + zu_;
        const VectorXd rp = A_ * x_ - b_;

        double reg = base_reg;
        for (int attempt = 0;; ++attempt) {
            MatrixXd M = H_;
            M.diagonal() += diag;
            M.diagonal().array() += reg;
            kkt_.compute(M);
            if (kkt_.info() == Eigen::Success || attempt >= 8) {
                break;
            }
            reg *= 100.0;
        }
        if (m > 0) {
            minv_at_ = kkt_.solve(A_.transpose());
            MatrixXd S = A_ * minv_at_;
            S.diagonal().array() += 1e-14 * std::max(1.0, S.diagonal().cwiseAbs().maxCoeff());
            schur_.compute(S);
        }

        // Predictor.
        const VectorXd rcl_aff = -sl.cwiseProduct(zl_);
        const VectorXd rcu_aff = -su.cwiseProduct(zu_);
        const Direction aff = newton(rd, rp, rcl_aff, rcu_aff);

        double sigma = 0.0;
        if (bound_count_ > 0) {
            const double ap = std::min(fraction_to_boundary(sl, aff.dx, has_l_),
                                       fraction_to_boundary(su, -aff.dx, has_u_));
            const double ad = std::min(fraction_to_boundary(zl_, aff.dzl, has_l_),
                                       fraction_to_boundary(zu_, aff.dzu, has_u_));
            const double a = std::min(ap, ad);
            double mu_aff = 0.0;
            for (Index i = 0; i < n; ++i) {
                if (has_l_[static_cast<std::size_t>(i)])
                    mu_aff += (sl(i) + a * aff.dx(i)) * (zl_(i) + a * aff.dzl(i));
                if (has_u_[static_cast<std::size_t>(i)])
                    mu_aff += (su(i) - a * aff.dx(i)) * (zu_(i) + a * aff.dzu(i));
            }
            mu_aff /= static_cast<double>(bound_count_);
            sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
            sigma = std::clamp(sigma, 0.0, 1.0);
        }

        // Corrector.
        VectorXd rcl = VectorXd::Zero(n);
        VectorXd rcu = VectorXd::Zero(n);
        for (Index i = 0; i < n; ++i) {
            if (has_l_[static_cast<std::size_t>(i)])
                rcl(i) = sigma * mu - sl(i) * zl_(i) - aff.dx(i) * aff.dzl(i);
            if (has_u_[static_cast<std::size_t>(i)])
                rcu(i) = sigma * mu - su(i) * zu_(i) + aff.dx(i) * aff.dzu(i);
        }
        const Direction d = bound_count_ > 0 ? newton(rd, rp, rcl, rcu) : aff;

        const double ap = std::min(fraction_to_boundary(sl, d.dx, has_l_), fraction_to_boundary(su, -d.dx, has_u_));
        const double ad = std::min(fraction_to_boundary(zl_, d.dzl, has_l_), fraction_to_boundary(zu_, d.dzu, has_u_));
        const double tau = std::max(0.995, 1.0 - mu);
        const double step = std::min(1.0, tau * std::min(ap, ad));

        x_ += step * d.dx;
        y_ += step * d.dy;
        zl_ += step * d.dzl;
        zu_ += step * d.dzu;
        stalled = step < 1e-10 ? stalled + 1 : 0;
    }
}

} // namespace

QpProblem QpProblem::unconstrained(Eigen::MatrixXd H, Eigen::VectorXd g)
{
    QpProblem p;
    const Index n = g.size();
    p.H = std::move(H);
    p.g = std::move(g);
    p.A_eq = MatrixXd::Zero(0, n);
    p.b_eq = VectorXd::Zero(0);
    p.lower = VectorXd::Constant(n, -unbounded);
    p.upper = VectorXd::Constant(n, unbounded);
    return p;
}

void QpProblem::validate() const
{
    const Index n = g.size();
    if (H.rows() != n || H.cols() != n) {
        throw std::invalid_argument("qp: H must be n x n with n = size of g");
    }
    if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) {
        throw std::invalid_argument("qp: A_eq must be m x n with m = size of b_eq");
    }
    if (A_eq.rows() > n) {
        throw std::invalid_argument("qp: more equality constraints than variables");
    }
    if (lower.size() != n || upper.size() != n) {
        throw std::invalid_argument("qp: bound vectors must have size n");
    }
    if (!H.allFinite() || !g.allFinite() || !A_eq.allFinite() || !b_eq.allFinite()) {
        throw std::invalid_argument("qp: non-finite problem data");
    }
    if (n > 0 && (H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw std::invalid_argument("qp: H is not symmetric");
    }
    for (Index i = 0; i < n; ++i) {
        if (std::isnan(lower(i)) || std::isnan(upper(i))) {
            throw std::invalid_argument("qp: NaN bound at index " + std::to_string(i));
        }
        if (lower(i) > upper(i)) {
            throw std::invalid_argument("qp: lower > upper at index " + std::to_string(i));
        }
        if (lower(i) == unbounded || upper(i) == -unbounded) {
            throw std::invalid_argument("qp: bound points the wrong way at index " + std::to_string(i));
        }
    }
}

std::string to_string(QpStatus status)
{
    switch (status) {
    case QpStatus::Optimal:
        return "optimal";
    case QpStatus::MaxIterations:
        return "max_iterations";
    case QpStatus::Infeasible:
        return "infeasible";
    }
    return "unknown";
}

double qp_objective(const QpProblem& problem, const Eigen::VectorXd& x)
{
    return 0.5 * x.dot(problem.H * x) + problem.g.dot(x);
}

double qp_lagrangian(const QpProblem& p, const QpSolution& s)
{
    double value = qp_objective(p, s.x) - s.eq_multipliers.dot(p.A_eq * s.x - p.b_eq);
    for (Index i = 0; i < p.size(); ++i) {
        if (finite_bound(p.lower(i))) value -= s.lower_multipliers(i) * (s.x(i) - p.lower(i));
        if (finite_bound(p.upper(i))) value -= s.upper_multipliers(i) * (p.upper(i) - s.x(i));
    }
    return value;
}

double kkt_residual(const QpProblem& p, const QpSolution& s)
{
    const Index n = p.size();
    if (s.x.size() != n || s.eq_multipliers.size() != p.num_equalities() || s.lower_multipliers.size() != n ||
        s.upper_multipliers.size() != n) {
        throw std::invalid_argument("kkt_residual: solution dimensions do not match problem");
    }
    const VectorXd hx = p.H * s.x;
    const VectorXd aty = p.A_eq.transpose() * s.eq_multipliers;
    const VectorXd rd = hx + p.g - aty - s.lower_multipliers + s.upper_multipliers;
    const double dual_scale = std::max({1.0, inf_norm(hx), inf_norm(p.g), inf_norm(aty),
                                        inf_norm(s.lower_multipliers), inf_norm(s.upper_multipliers)});
    double residual = inf_norm(rd) / dual_scale;

    if (p.num_equalities() > 0) {
        const VectorXd ax = p.A_eq * s.x;
        const double primal_scale = std::max({1.0, inf_norm(ax), inf_norm(p.b_eq)});
        residual = std::max(residual, inf_norm(ax - p.b_eq) / primal_scale);
    }

    const double x_scale = std::max(1.0, inf_norm(s.x));
    // Products x_i z_i are compared with the sizes of the factors rather than
    // with objective terms, which can carry large constants that cancel.
    const double comp_scale =
        x_scale * std::max({1.0, inf_norm(s.lower_multipliers), inf_norm(s.upper_multipliers)});
    for (Index i = 0; i < n; ++i) {
        const double zl = s.lower_multipliers(i);
        const double zu = s.upper_multipliers(i);
        if (finite_bound(p.lower(i))) {
            residual = std::max(residual, (p.lower(i) - s.x(i)) / x_scale);
            residual = std::max(residual, std::abs(zl * (s.x(i) - p.lower(i))) / comp_scale);
            residual = std::max(residual, -zl / dual_scale);
        } else {
            residual = std::max(residual, std::abs(zl) / dual_scale);
        }
        if (finite_bound(p.upper(i))) {
            residual = std::max(residual, (s.x(i) - p.upper(i)) / x_scale);
            residual = std::max(residual, std::abs(zu * (p.upper(i) - s.x(i))) / comp_scale);
            residual = std::max(residual, -zu / dual_scale);
        } else {
            residual = std::max(residual, std::abs(zu) / dual_scale);
        }
    }
    return residual;
}

QpSolution solve(const QpProblem& problem, const QpSettings& settings)
{
    problem.validate();
    if (settings.tolerance <= 0.0 || settings.max_iterations < 0) {
        throw std::invalid_argument("qp: tolerance must be positive and max_iterations non-negative");
    }
    if (settings.check_convexity && !convex_enough(problem.H)) {
        throw std::invalid_argument("qp: H is not positive semidefinite");
    }
    const Index n = problem.size();
    if (!rows_reachable(problem)) {
        return infeasible_result(problem);
    }

    // Variables pinned by lower == upper are substituted out.
    std::vector<Index> free_idx;
    std::vector<Index> fixed_idx;
    for (Index i = 0; i < n; ++i) {
        (problem.lower(i) == problem.upper(i) ? fixed_idx : free_idx).push_back(i);
    }

    QpSolution result;
    if (fixed_idx.empty()) {
        InteriorPoint ip(problem, settings);
        result = ip.run();
    } else {
        const auto nf = static_cast<Index>(free_idx.size());
        VectorXd x_fixed(static_cast<Index>(fixed_idx.size()));
        for (std::size_t k = 0; k < fixed_idx.size(); ++k) {
            x_fixed(static_cast<Index>(k)) = problem.lower(fixed_idx[k]);
        }
        QpProblem reduced;
        reduced.H = problem.H(free_idx, free_idx);
        reduced.g = problem.g(free_idx) + problem.H(free_idx, fixed_idx) * x_fixed;
        reduced.A_eq = problem.A_eq(Eigen::all, free_idx);
        reduced.b_eq = problem.b_eq - problem.A_eq(Eigen::all, fixed_idx) * x_fixed;
        reduced.lower = problem.lower(free_idx);
        reduced.upper = problem.upper(free_idx);

        QpSolution part;
        if (nf > 0) {
            QpSettings inner = settings;
            inner.check_convexity = false;
            part = solve(reduced, inner);
        } else {
            part.x = VectorXd::Zero(0);
            part.eq_multipliers = VectorXd::Zero(problem.num_equalities());
            part.lower_multipliers = VectorXd::Zero(0);
            part.upper_multipliers = VectorXd::Zero(0);
            part.status = reduced.b_eq.size() == 0 || inf_norm(reduced.b_eq) <= settings.tolerance
                              ? QpStatus::Optimal
                              : QpStatus::Infeasible;
        }
        result.x = VectorXd::Zero(n);
        result.x(free_idx) = part.x;
        result.x(fixed_idx) = x_fixed;
        result.eq_multipliers = part.eq_multipliers;
        result.lower_multipliers = VectorXd::Zero(n);
        result.upper_multipliers = VectorXd::Zero(n);
        result.lower_multipliers(free_idx) = part.lower_multipliers;
        result.upper_multipliers(free_idx) = part.upper_multipliers;
        // Multipliers of pinned variables absorb their stationarity residual.
        const VectorXd r = problem.H * result.x + problem.g - problem.A_eq.transpose() * result.eq_multipliers;
        for (Index i : fixed_idx) {
            if (r(i) >= 0.0) {
                result.lower_multipliers(i) = r(i);
            } else {
                result.upper_multipliers(i) = -r(i);
            }
        }
        result.iterations = part.iterations;
        result.status = part.status;
        result.objective = qp_objective(problem, result.x);
        result.kkt_residual = kkt_residual(problem, result);
        if (result.status == QpStatus::Optimal && result.kkt_residual > settings.tolerance) {
            result.status = QpStatus::MaxIterations;
        }
    }

    if (result.status == QpStatus::MaxIterations && problem.num_equalities() > 0 &&
        !equalities_attainable(problem, settings)) {
        result.status = QpStatus::Infeasible;
    }
    return result;
}

} // namespace lupi
