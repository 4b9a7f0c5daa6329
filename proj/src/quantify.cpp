#include "tct/quantify.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "tct/error.hpp"
#include "tct/ray_trace.hpp"

namespace tct {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

RowSparse build_system_matrix(int side, double theta, int n_view,
                              const ScanGeometry &geom,
                              const SurrogateOptions &opts) {
    if (side < 2) {
        throw DomainError("system matrix: side must be >= 2");
    }
    if (n_view < 1) {
        throw DomainError("system matrix: need at least one view");
    }
    if (!(theta >= 0.0 && theta <= 2.0 * pi)) {
        throw DomainError("system matrix: theta must lie in [0, 2pi]");
    }
    const int n_bins = 2 * side;
    const std::size_t m = static_cast<std::size_t>(n_view) * n_bins;
    const std::size_t n = static_cast<std::size_t>(side) * side;
    if (m * n > opts.max_entries) {
        std::ostringstream why;
        why << "system matrix: " << m << " x " << n << " exceeds the memory guard";
        throw NumericalError(why.str());
    }
    const double px = opts.pixel_size > 0.0 ? opts.pixel_size : ScanGeometry::desk_pixel_size(side);
    const PixelGrid grid{side, px};
    const double span = side * px * opts.detector_span;

    std::vector<Triplet> trips;
    trips.reserve(m * static_cast<std::size_t>(2 * side));
    for (int v = 0; v < n_view; ++v) {
        const double beta = n_view > 1 ? theta * v / (n_view - 1) : 0.0;
        const Vec2 eb{std::cos(beta), std::sin(beta)};
        const Vec2 eu{-eb.y(), eb.x()};
        for (int j = 0; j < n_bins; ++j) {
            const double frac = (j - 0.5 * (n_bins - 1)) / n_bins;
            Vec2 a, b;
            if (opts.parallel_beam) {
                const Vec2 o = frac * span * eu;
                a = o + side * px * eb;
                b = o - side * px * eb;
            } else {
                a = geom.sod * eb;
                b = a - geom.sdd * eb + frac * span * geom.magnification() * eu;
            }
            const int row = v * n_bins + j;
            trace_ray(grid, a, b, [&](int p, double len) { trips.emplace_back(row, p, len); });
        }
    }
    RowSparse A(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

SpMat build_gradient_matrix(int side) {
    if (side < 2) {
        throw DomainError("gradient matrix: side must be >= 2");
    }
    const int n = side * side;
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(4 * n));
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            const int p = r * side + c;
            if (c + 1 < side) {
                trips.emplace_back(p, p, -1.0);
                trips.emplace_back(p + 1, p, 1.0);
            }
            if (r + 1 < side) {
                trips.emplace_back(p, n + p, -1.0);
                trips.emplace_back(p + side, n + p, 1.0);
            }
        }
    }
    SpMat D(n, 2 * n);
    D.setFromTriplets(trips.begin(), trips.end());
    return D;
}

namespace {

struct DisjointSets {
    std::vector<int> parent;
    explicit DisjointSets(int n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Gradient index k links pixel p to its right or lower neighbour; the last
// column / row has no neighbour and contributes an all-zero column of D.
bool gradient_link(int side, int k, int &p, int &q) {
    const int n = side * side;
    if (k < n) {
        p = k;
        if (p % side == side - 1) {
            return false;
        }
        q = p + 1;
    } else {
        p = k - n;
        if (p / side == side - 1) {
            return false;
        }
        q = p + side;
    }
    return true;
}

} // namespace

NullBasis null_basis_of(const RowSparse &A, double tolerance) {
    const Eigen::Index n = A.cols();
    std::vector<Eigen::Index> rays;
    for (Eigen::Index r = 0; r < A.outerSize(); ++r) {
        if (A.row(r).nonZeros() > 0) {
            rays.push_back(r);
        }
    }
    const Eigen::Index m = static_cast<Eigen::Index>(rays.size());
    NullBasis basis;
    if (m == 0) {
        basis.Z = MatrixXd::Identity(n, n);
        return basis;
    }
    MatrixXd Ad = MatrixXd::Zero(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (RowSparse::InnerIterator it(A, rays[i]); it; ++it) {
            Ad(i, it.col()) = it.value();
        }
    }
    // squared singular values below this count as zero
    const double rel = tolerance * tolerance;
    if (m >= n) {
        MatrixXd G = MatrixXd::Zero(n, n);
        G.selfadjointView<Eigen::Lower>().rankUpdate(Ad.transpose());
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(G);
        const VectorXd &lam = eig.eigenvalues(); // ascending
        const double cut = rel * std::max(lam[n - 1], 0.0);
        Eigen::Index k = 0;
        while (k < n && lam[k] <= cut) {
            ++k;
        }
        basis.rank = static_cast<int>(n - k);
        basis.Z = eig.eigenvectors().leftCols(k);
        return basis;
    }
    MatrixXd G = MatrixXd::Zero(m, m);
    G.selfadjointView<Eigen::Lower>().rankUpdate(Ad);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(G);
    const VectorXd &lam = eig.eigenvalues();
    const double cut = rel * std::max(lam[m - 1], 0.0);
    Eigen::Index first = 0;
    while (first < m && lam[first] <= cut) {
        ++first;
    }
    const Eigen::Index r = m - first;
    basis.rank = static_cast<int>(r);
    // orthonormal range of A', completed to the whole space by Householder
    MatrixXd Q1 = Ad.transpose() * eig.eigenvectors().rightCols(r);
    for (Eigen::Index j = 0; j < r; ++j) {
        Q1.col(j) /= std::sqrt(lam[first + j]);
    }
    Eigen::HouseholderQR<MatrixXd> qr(Q1);
    MatrixXd Z = MatrixXd::Zero(n, n - r);
    Z.bottomRows(n - r).setIdentity();
    Z.applyOnTheLeft(qr.householderQ());
    basis.Z = std::move(Z);
    return basis;
}

namespace {

void gradient_support(const SpMat &D, const SliceImage &x_ref, double threshold,
                      std::vector<std::uint8_t> &support, VectorXd &c, int &support_size) {
    const Eigen::Index n = D.rows();
    const VectorXd x = Eigen::Map<const VectorXd>(x_ref.values.data(), n);
    const VectorXd g = D.transpose() * x;
    support.assign(static_cast<std::size_t>(2 * n), 0);
    c = VectorXd::Zero(n);
    support_size = 0;
    for (Eigen::Index k = 0; k < 2 * n; ++k) {
        if (std::abs(g[k]) > threshold) {
            support[k] = 1;
            ++support_size;
            const double sgn = g[k] > 0.0 ? 1.0 : -1.0;
            for (SpMat::InnerIterator it(D, k); it; ++it) {
                c[it.row()] += sgn * it.value();
            }
        }
    }
}

// Z' [-E, -c] with E sparse and c handled as a rank-one term.
class NullSpaceConstraint final : public ConstraintMatrix {
  public:
    NullSpaceConstraint(const MatrixXd &Z, SpMat E, const VectorXd &c)
        : Z_(Z), E_(std::move(E)), c_(c), zc_(Z.transpose() * c) {}
    Eigen::Index rows() const override { return Z_.cols(); }
    Eigen::Index cols() const override { return E_.cols() + 1; }
    VectorXd multiply(const VectorXd &x) const override {
        const Eigen::Index q = E_.cols();
        VectorXd v = -(E_ * x.head(q));
        v -= x[q] * c_;
        return Z_.transpose() * v;
    }
    VectorXd multiply_transpose(const VectorXd &y) const override {
        const VectorXd zy = Z_ * y;
        VectorXd out(cols());
        out.head(E_.cols()) = -(E_.transpose() * zy);
        out[E_.cols()] = -c_.dot(zy);
        return out;
    }
    void normal_matrix(const VectorXd &d, MatrixXd &N) const override {
        const Eigen::Index q = E_.cols();
        const SpMat L = E_ * d.head(q).asDiagonal() * E_.transpose();
        const MatrixXd LZ = L * Z_;
        N.triangularView<Eigen::Lower>() = Z_.transpose() * LZ;
        N.selfadjointView<Eigen::Lower>().rankUpdate(zc_, d[q]);
    }

  private:
    const MatrixXd &Z_;
    SpMat E_;
    const VectorXd &c_;
    VectorXd zc_;
};

// With tau = 1/t and zeta = v/t the certificate LP becomes
//   max tau  s.t.  D_{I^c} zeta + c tau in range(A'),  |zeta| <= 1,
// and range(A') is the orthogonal complement of the null basis Z.
LPCertificate certify_with_basis(const NullBasis &basis, const SpMat &D,
                                 const SliceImage &x_ref,
                                 const std::vector<std::uint8_t> &support, const VectorXd &c,
                                 LPCertificate cert, const CertificateOptions &opts) {
    const int side = x_ref.side;
    const int n = side * side;
    std::vector<Triplet> trips;
    Eigen::Index q = 0;
    for (int k = 0; k < 2 * n; ++k) {
        int p, r;
        if (!support[k] && gradient_link(side, k, p, r)) {
            for (SpMat::InnerIterator it(D, k); it; ++it) {
                trips.emplace_back(it.row(), q, it.value());
            }
            ++q;
        }
    }
    SpMat E(n, q);
    E.setFromTriplets(trips.begin(), trips.end());

    if (basis.Z.cols() == 0) {
        // A has full column rank: x_ref is the only solution of Ax = b
        cert.feasible = true;
        cert.t_star = 0.0;
        cert.solver_status = LpStatus::optimal;
        return cert;
    }
    const NullSpaceConstraint K(basis.Z, std::move(E), c);
    const Eigen::Index nv = q + 1;
    VectorXd cost = VectorXd::Zero(nv);
    cost[q] = -1.0;
    VectorXd lower = VectorXd::Constant(nv, -1.0);
    VectorXd upper = VectorXd::Constant(nv, 1.0);
    lower[q] = 0.0;
    upper[q] = opts.tau_max;
    const LpResult res = solve_lp(K, VectorXd::Zero(K.rows()), cost, lower, upper, opts.lp);
    cert.iterations = res.iterations;
    cert.solver_status = res.status;
    if (res.status != LpStatus::optimal) {
        cert.feasible = false;
        cert.t_star = std::numeric_limits<double>::infinity();
        return cert;
    }
    const double tau = res.x[q];
    // tau = 0 is the only solution when the original LP has no feasible point
    if (tau <= 1.0 / opts.t_infeasible) {
        cert.feasible = false;
        cert.t_star = std::numeric_limits<double>::infinity();
    } else {
        cert.feasible = true;
        cert.t_star = 1.0 / tau;
    }
    return cert;
}

} // namespace

bool stacked_full_rank(const RowSparse &A, const std::vector<std::uint8_t> &in_support,
                       int side, double tolerance, int *deficiency) {
    const int n = side * side;
    if (A.cols() != n || in_support.size() != static_cast<std::size_t>(2 * n)) {
        throw DomainError("rank test: dimension mismatch");
    }
    // null(D_{I^c}') is spanned by indicators of the pixel regions joined by
    // zero-gradient links, so the stack has full rank iff A restricted to
    // those indicators does.
    DisjointSets sets(n);
    for (int k = 0; k < 2 * n; ++k) {
        int p, q;
        if (!in_support[k] && gradient_link(side, k, p, q)) {
            sets.unite(p, q);
        }
    }
    std::vector<int> label(static_cast<std::size_t>(n), -1);
    std::vector<int> root_label(static_cast<std::size_t>(n), -1);
    int regions = 0;
    for (int p = 0; p < n; ++p) {
        const int r = sets.find(p);
        if (root_label[r] < 0) {
            root_label[r] = regions++;
        }
        label[p] = root_label[r];
    }
    MatrixXd M = MatrixXd::Zero(A.rows(), regions);
    for (Eigen::Index r = 0; r < A.outerSize(); ++r) {
        for (RowSparse::InnerIterator it(A, r); it; ++it) {
            M(r, label[it.col()]) += it.value();
        }
    }
    int rank = 0;
    if (M.rows() > 0) {
        Eigen::ColPivHouseholderQR<MatrixXd> qr(M);
        qr.setThreshold(tolerance);
        rank = static_cast<int>(qr.rank());
    }
    if (deficiency) {
        *deficiency = regions - rank;
    }
    return rank == regions;
}

LPCertificate uniqueness_test(const RowSparse &A, const SpMat &D, const SliceImage &x_ref,
                              const CertificateOptions &opts) {
    return uniqueness_test(A, null_basis_of(A, opts.range_tolerance), D, x_ref, opts);
}

LPCertificate uniqueness_test(const RowSparse &A, const NullBasis &basis, const SpMat &D,
                              const SliceImage &x_ref, const CertificateOptions &opts) {
    const int side = x_ref.side;
    const int n = side * side;
    if (A.cols() != n || D.rows() != n || D.cols() != 2 * n || basis.Z.rows() != n) {
        throw DomainError("uniqueness test: dimension mismatch");
    }
    std::vector<std::uint8_t> support;
    VectorXd c;
    LPCertificate cert;
    gradient_support(D, x_ref, opts.support_threshold, support, c, cert.support_size);
    cert.full_rank = stacked_full_rank(A, support, side, opts.rank_tolerance,
                                       &cert.rank_deficiency);
    if (!cert.full_rank && opts.lp_only_if_full_rank) {
        cert.t_star = std::numeric_limits<double>::infinity();
        cert.solver_status = LpStatus::optimal;
        return cert;
    }
    return certify_with_basis(basis, D, x_ref, support, c, cert, opts);
}

void SamplingModelParams::validate() const {
    if (!(T_theta > 0.0 && T_nview > 0.0 && T_t > 0.0 && alpha > 0.0 && beta > 0.0 &&
          gamma > 0.0)) {
        throw ConfigError("sampling model: thresholds and exponents must be positive");
    }
}

double sampling_objective(const SamplingSpec &spec, const SamplingModelParams &params) {
    params.validate();
    return std::pow(spec.theta / params.T_theta, params.alpha) *
           std::pow(spec.n_view / params.T_nview, params.beta) *
           std::pow(spec.t_star / params.T_t, params.gamma);
}

void finish_spec(SamplingSpec &spec, const QuantifyOptions &opts) {
    spec.r_view = spec.n_view / sufficient_views(spec.working_side);
    spec.target_side = opts.target_side;
    spec.n_view_target =
        static_cast<int>(std::lround(spec.r_view * sufficient_views(opts.target_side)));
    const double d = tilt_depth_for_angle(opts.r_inner_mm, spec.theta);
    spec.d_prime_mm = detector_extension(opts.target_geometry, opts.r_inner_mm, d);
    spec.d_prime = spec.d_prime_mm / opts.target_geometry.bin_pitch;
}

QuantifyResult quantify_projection(const std::vector<SliceImage> &phantoms,
                                   const ScanGeometry &geom,
                                   const SamplingModelParams &params,
                                   const QuantifyOptions &opts) {
    params.validate();
    if (phantoms.empty()) {
        throw ConfigError("quantify: no phantoms given");
    }
    const int side = phantoms.front().side;
    for (const auto &p : phantoms) {
        if (!p.same_grid(phantoms.front())) {
            throw ConfigError("quantify: phantoms must share one grid");
        }
    }
    std::vector<double> thetas = opts.thetas;
    std::vector<int> views = opts.n_views;
    if (thetas.empty()) {
        for (int deg = 20; deg <= 90; deg += 2) {
            thetas.push_back(deg_to_rad(deg));
        }
    }
    if (views.empty()) {
        for (int v = 4; v <= 32; v += 2) {
            views.push_back(v);
        }
    }
    std::sort(thetas.begin(), thetas.end());
    std::sort(views.begin(), views.end());

    SurrogateOptions surrogate = opts.surrogate;
    if (surrogate.pixel_size <= 0.0) {
        surrogate.pixel_size = phantoms.front().pixel_size;
    }
    const SpMat D = build_gradient_matrix(side);

    QuantifyResult result;
    const int nt = static_cast<int>(thetas.size());
    const int nv = static_cast<int>(views.size());
    auto &cands = result.candidates;
    cands.resize(static_cast<std::size_t>(nt) * nv);
    std::vector<double> base(cands.size());
    for (int i = 0; i < nt; ++i) {
        for (int k = 0; k < nv; ++k) {
            auto &c = cands[i * nv + k];
            c.theta = thetas[i];
            c.n_view = views[k];
            SamplingSpec probe;
            probe.theta = c.theta;
            probe.n_view = c.n_view;
            probe.t_star = params.T_t;
            base[i * nv + k] = sampling_objective(probe, params);
        }
    }

    auto evaluate = [&](int idx) {
        auto &c = cands[idx];
        const auto t0 = std::chrono::steady_clock::now();
        const RowSparse A = build_system_matrix(side, c.theta, c.n_view, geom, surrogate);
        const NullBasis basis = null_basis_of(A, opts.certificate.range_tolerance);
        c.evaluated = true;
        c.passes = true;
        c.full_rank = true;
        c.t_star = 0.0;
        for (const auto &ph : phantoms) {
            const LPCertificate cert = uniqueness_test(A, basis, D, ph, opts.certificate);
            ++result.lp_solves;
            c.full_rank = c.full_rank && cert.full_rank;
            c.t_star = std::max(c.t_star, cert.t_star);
            if (!cert.passes() || cert.t_star > params.T_t) {
                c.passes = false;
                break;
            }
        }
        SamplingSpec s;
        s.theta = c.theta;
        s.n_view = c.n_view;
        s.t_star = c.t_star;
        c.objective = c.passes ? sampling_objective(s, params)
                               : std::numeric_limits<double>::infinity();
        c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (opts.progress) {
            opts.progress(c);
        }
    };

    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    auto consider = [&](int idx) {
        if (cands[idx].passes && cands[idx].objective < best) {
            best = cands[idx].objective;
            best_idx = idx;
        }
    };

    if (opts.search == QuantifySearch::frontier) {
        // binary search at the widest angle, then a staircase toward smaller ones
        int lo = -1;
        int hi = nv - 1;
        const int top = nt - 1;
        evaluate(top * nv + hi);
        if (cands[top * nv + hi].passes) {
            while (hi - lo > 1) {
                const int mid = (lo + hi) / 2;
                evaluate(top * nv + mid);
                if (cands[top * nv + mid].passes) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            int k = hi;
            for (int i = top; i >= 0; --i) {
                while (k < nv) {
                    const int idx = i * nv + k;
                    if (!cands[idx].evaluated) {
                        evaluate(idx);
                    }
                    if (cands[idx].passes) {
                        break;
                    }
                    ++k;
                }
                if (k == nv) {
                    break;
                }
                cands[i * nv + k].frontier = true;
                consider(i * nv + k);
            }
        }
    } else if (!opts.monotone_pruning) {
        for (int idx = 0; idx < static_cast<int>(cands.size()); ++idx) {
            evaluate(idx);
            consider(idx);
        }
    } else {
        evaluate(nt * nv - 1);
        consider(nt * nv - 1);
        for (;;) {
            // lower bound of each open candidate from what dominates it
            int pick = -1;
            double pick_lb = std::numeric_limits<double>::infinity();
            for (int i = 0; i < nt; ++i) {
                for (int k = 0; k < nv; ++k) {
                    const int idx = i * nv + k;
                    auto &c = cands[idx];
                    if (c.evaluated || c.pruned) {
                        continue;
                    }
                    double t_lb = 0.0;
                    bool dominated_failure = false;
                    for (int i2 = i; i2 < nt && !dominated_failure; ++i2) {
                        for (int k2 = k; k2 < nv; ++k2) {
                            const auto &e = cands[i2 * nv + k2];
                            if (!e.evaluated) {
                                continue;
                            }
                            if (!e.passes) {
                                dominated_failure = true;
                                break;
                            }
                            t_lb = std::max(t_lb, e.t_star);
                        }
                    }
                    const double lb =
                        base[idx] * std::pow(t_lb / params.T_t, params.gamma);
                    if (dominated_failure || lb >= best) {
                        c.pruned = true;
                        if (opts.progress) {
                            opts.progress(c);
                        }
                        continue;
                    }
                    if (lb < pick_lb) {
                        pick_lb = lb;
                        pick = idx;
                    }
                }
            }
            if (pick < 0) {
                break;
            }
            evaluate(pick);
            consider(pick);
        }
    }

    if (best_idx < 0) {
        std::ostringstream diag;
        double best_t = std::numeric_limits<double>::infinity();
        bool any = false;
        for (const auto &c : cands) {
            if (c.evaluated && (!any || c.t_star < best_t)) {
                any = true;
                best_t = c.t_star;
                diag.str("");
                diag << "closest candidate theta=" << rad_to_deg(c.theta)
                     << " deg, n_view=" << c.n_view << ", t*=" << c.t_star
                     << ", full_rank=" << (c.full_rank ? "yes" : "no");
            }
        }
        throw InfeasibleError("quantify: no candidate passed the certificate", diag.str());
    }

    const auto &c = cands[best_idx];
    result.best.theta = c.theta;
    result.best.n_view = c.n_view;
    result.best.t_star = c.t_star;
    result.best.working_side = side;
    result.best.objective = c.objective;
    finish_spec(result.best, opts);
    return result;
}

std::string format_spec(const SamplingSpec &spec) {
    std::ostringstream out;
    out << std::setprecision(10);
    out << "theta_deg: " << rad_to_deg(spec.theta) << "\n"
        << "n_view: " << spec.n_view << "\n"
        << "t_star: " << spec.t_star << "\n"
        << "r_view: " << spec.r_view << "\n"
        << "objective: " << spec.objective << "\n"
        << "working_side: " << spec.working_side << "\n"
        << "target_side: " << spec.target_side << "\n"
        << "n_view_target: " << spec.n_view_target << "\n"
        << "d_prime_bins: " << spec.d_prime << "\n"
        << "d_prime_mm: " << spec.d_prime_mm << "\n";
    return out.str();
}

} // namespace tct
