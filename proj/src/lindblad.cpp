#include "qdsim/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qdsim {

namespace {

std::string physicality_report(const ComplexMatrix& rho) {
    std::string why;
    DensityMatrix::is_physical(rho, &why);
    return why;
}

}  // namespace

DensityMatrix::DensityMatrix(const ComplexMatrix& rho) : rho_(rho) {
    std::string why;
    if (!is_physical(rho_, &why)) throw std::invalid_argument("density matrix: " + why);
}

DensityMatrix DensityMatrix::pure(const Ket& psi) {
    ComplexMatrix rho(psi.dim());
    for (int r = 0; r < psi.dim(); ++r)
        for (int c = 0; c < psi.dim(); ++c) rho(r, c) = psi[r] * std::conj(psi[c]);
    return DensityMatrix(rho);
}

DensityMatrix DensityMatrix::pure_basis(int dim, int i) {
    ComplexMatrix rho(dim);
    rho(i, i) = 1.0;
    return DensityMatrix(rho);
}

bool DensityMatrix::is_physical(const ComplexMatrix& rho, std::string* why) {
    if (rho.herm_defect() > herm_tol) {
        if (why) *why = "not Hermitian";
        return false;
    }
    if (std::abs(rho.trace() - cdouble{1.0, 0.0}) > trace_tol) {
        if (why) *why = "trace differs from 1";
        return false;
    }
    ComplexMatrix sym(rho.dim());
    for (int r = 0; r < rho.dim(); ++r)
        for (int c = 0; c < rho.dim(); ++c) sym(r, c) = 0.5 * (rho(r, c) + std::conj(rho(c, r)));
    EigenResult eig = herm_eigen(sym);
    if (eig.values.front() < eigen_floor) {
        if (why) *why = "negative eigenvalue";
        return false;
    }
    if (why) why->clear();
    return true;
}

LindbladSystem::LindbladSystem(ComplexMatrix h_static, std::vector<HamiltonianTerm> h_terms,
                               std::vector<CollapseChannel> collapse)
    : h_static_(std::move(h_static)), h_terms_(std::move(h_terms)), collapse_(std::move(collapse)) {
    if (h_static_.herm_defect() > 1e-12 * std::max(1.0, h_static_.max_abs()))
        throw std::invalid_argument("h_static not Hermitian");
    const int n = h_static_.dim();
    for (const auto& t : h_terms_)
        if (t.op.dim() != n) throw std::invalid_argument("Hamiltonian term dimension mismatch");

    channel_data_.reserve(collapse_.size());
    for (const auto& ch : collapse_) {
        if (ch.op.dim() != n) throw std::invalid_argument("collapse operator dimension mismatch");
        ChannelData d;
        d.op = ch.op;
        d.op_adj = ch.op.adjoint();
        d.ctc = d.op_adj * d.op;
        int nonzero = 0;
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                if (std::abs(ch.op(r, c)) != 0.0) {
                    ++nonzero;
                    d.row = r;
                    d.col = c;
                    d.entry_norm2 = std::norm(ch.op(r, c));
                }
            }
        }
        d.single_entry = (nonzero == 1);
        channel_data_.push_back(std::move(d));
    }
}

ComplexMatrix LindbladSystem::hamiltonian(double t) const {
    ComplexMatrix h = h_static_;
    const int n = h.dim();
    for (const auto& term : h_terms_) {
        const cdouble c = term.coeff.value(t);
        if (c == cdouble{0.0, 0.0}) continue;
        for (int r = 0; r < n; ++r) {
            for (int col = 0; col < n; ++col) {
                const cdouble z = c * term.op(r, col);
                if (z != cdouble{0.0, 0.0}) {
                    h(r, col) += z;
                    h(col, r) += std::conj(z);
                }
            }
        }
    }
    return h;
}

namespace {

double channel_gain(const TimeCoefficient& amplitude, double t) {
    const cdouble a = amplitude.value(t);
    if (std::abs(a.imag()) > 1e-12 * (1.0 + std::abs(a.real())) || a.real() < 0.0)
        throw std::runtime_error("collapse amplitude must be real and nonnegative");
    return a.real() * a.real();
}

}  // namespace

/// out = full Lindblad right-hand side at (rho, t); w1, w2, hbuf are scratch.
void rhs_into(const LindbladSystem& sys, const ComplexMatrix& rho, double t, ComplexMatrix& out,
              ComplexMatrix& w1, ComplexMatrix& w2, ComplexMatrix& hbuf) {
    const int n = rho.dim();

    // -i [H(t), rho]
    ComplexMatrix& h = hbuf;
    h = sys.h_static();
    for (const auto& term : sys.h_terms()) {
        const cdouble c = term.coeff.value(t);
        if (c == cdouble{0.0, 0.0}) continue;
        for (int r = 0; r < n; ++r) {
            for (int col = 0; col < n; ++col) {
                const cdouble z = c * term.op(r, col);
                if (z != cdouble{0.0, 0.0}) {
                    h(r, col) += z;
                    h(col, r) += std::conj(z);
                }
            }
        }
    }
    mul_into(w1, h, rho);
    mul_into(w2, rho, h);
    const cdouble mi{0.0, -1.0};
    for (int i = 0; i < n * n; ++i) out.data()[i] = mi * (w1.data()[i] - w2.data()[i]);

    // dissipators
    for (size_t m = 0; m < sys.collapse().size(); ++m) {
        const double g = channel_gain(sys.collapse()[m].amplitude, t);
        if (g == 0.0) continue;
        const auto& d = sys.channel_data_[m];
        if (d.single_entry) {
            // c = z |row><col|:  g (|z|^2 rho_cc |row><row|
            //                       - 1/2 |z|^2 {|col><col|, rho})
            const double gz = g * d.entry_norm2;
            out(d.row, d.row) += gz * rho(d.col, d.col);
            for (int k = 0; k < n; ++k) {
                out(d.col, k) -= 0.5 * gz * rho(d.col, k);
                out(k, d.col) -= 0.5 * gz * rho(k, d.col);
            }
        } else {
            mul_into(w1, d.op, rho);
            mul_into(w2, w1, d.op_adj);
            add_scaled(out, g, w2);
            mul_into(w1, d.ctc, rho);
            mul_into(w2, rho, d.ctc);
            add_scaled(out, -0.5 * g, w1);
            add_scaled(out, -0.5 * g, w2);
        }
    }
}

ComplexMatrix rhs(const LindbladSystem& system, const DensityMatrix& rho, double t) {
    ComplexMatrix out(system.dim()), w1(system.dim()), w2(system.dim()), hbuf(system.dim());
    rhs_into(system, rho.matrix(), t, out, w1, w2, hbuf);
    if (!out.all_finite()) throw std::runtime_error("rhs: numeric overflow");
    return out;
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9;
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784,
                 A76 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200,
                 E6 = 22.0 / 525, E7 = -1.0 / 40;
// dense-output coefficients
constexpr double D1 = -12715105075.0 / 11282082432.0, D3 = 87487479700.0 / 32700410799.0,
                 D4 = -10690763975.0 / 1880347072.0, D5 = 701980252875.0 / 199316789632.0,
                 D6 = -1453857185.0 / 822651844.0, D7 = 69997945.0 / 29380423.0;

constexpr double base_step_cap = 1e-3;   // 1 ps between pulses
constexpr double min_step = 1e-9;        // below this the problem is declared stiff
constexpr double trace_drift_limit = 1e-6;

struct Windows {
    std::vector<std::pair<double, double>> w;

    explicit Windows(const LindbladSystem& sys) {
        auto add = [&](const TimeCoefficient& c) {
            if (c.support()) w.push_back(*c.support());
        };
        for (const auto& t : sys.h_terms()) add(t.coeff);
        for (const auto& c : sys.collapse()) add(c.amplitude);
        std::sort(w.begin(), w.end());
    }

    double cap(double t) const {
        double h = base_step_cap;
        for (const auto& [lo, hi] : w) {
            if (t >= lo - 1e-15 && t < hi - 1e-15)
                h = std::min(h, (hi - lo) / 600.0);
            else if (t < lo)
                h = std::min(h, std::max(lo - t, 1e-6));
        }
        return h;
    }
};

struct Dopri5 {
    const LindbladSystem& sys;
    const int n;
    Windows windows;
    double rel, abs;
    ComplexMatrix y, k1, k2, k3, k4, k5, k6, k7, ytmp, w1, w2, hbuf;
    ComplexMatrix r2, r3, r4, r5;  // dense-output blocks (r1 is y at step start)
    double t = 0.0, h_last = 0.0, t_old = 0.0;
    ComplexMatrix y_old;
    bool have_k1 = false;
    IntegratorStats stats;

    Dopri5(const LindbladSystem& s, const ComplexMatrix& y0, double rel_tol, double abs_tol)
        : sys(s), n(s.dim()), windows(s), rel(rel_tol), abs(abs_tol), y(y0), k1(n), k2(n), k3(n),
          k4(n), k5(n), k6(n), k7(n), ytmp(n), w1(n), w2(n), hbuf(n), r2(n), r3(n), r4(n), r5(n),
          y_old(n) {
        if (rel <= 0.0 || abs <= 0.0) throw std::invalid_argument("tolerances must be positive");
    }

    void f(const ComplexMatrix& yy, double tt, ComplexMatrix& out) {
        rhs_into(sys, yy, tt, out, w1, w2, hbuf);
    }

    void stage(const ComplexMatrix& base, double h, std::initializer_list<std::pair<double, const ComplexMatrix*>> terms) {
        ytmp = base;
        for (const auto& [a, k] : terms) add_scaled(ytmp, a * h, *k);
    }

    double error_norm(const ComplexMatrix& y1, double h) {
        // e = h * sum E_i k_i; uniform scale over entries
        double emax = 0.0;
        const double sc_base = abs + rel * std::max(y.max_abs(), y1.max_abs());
        for (int i = 0; i < n * n; ++i) {
            const cdouble e = h * (E1 * k1.data()[i] + E3 * k3.data()[i] + E4 * k4.data()[i] +
                                   E5 * k5.data()[i] + E6 * k6.data()[i] + E7 * k7.data()[i]);
            emax = std::max(emax, std::abs(e));
        }
        return emax / sc_base;
    }

    // one accepted step; returns the suggested next step size
    double step(double h_try, double t_end) {
        double h = std::min({h_try, windows.cap(t), t_end - t});
        for (;;) {
            if (h < min_step) {
                std::ostringstream msg;
                msg << "stiffness failure: step underflow at t = " << t << " ns";
                throw std::runtime_error(msg.str());
            }
            if (!have_k1) {
                f(y, t, k1);
                have_k1 = true;
            }

            stage(y, h, {{A21, &k1}});
            f(ytmp, t + C2 * h, k2);
            stage(y, h, {{A31, &k1}, {A32, &k2}});
            f(ytmp, t + C3 * h, k3);
            stage(y, h, {{A41, &k1}, {A42, &k2}, {A43, &k3}});
            f(ytmp, t + C4 * h, k4);
            stage(y, h, {{A51, &k1}, {A52, &k2}, {A53, &k3}, {A54, &k4}});
            f(ytmp, t + C5 * h, k5);
            stage(y, h, {{A61, &k1}, {A62, &k2}, {A63, &k3}, {A64, &k4}, {A65, &k5}});
            f(ytmp, t + h, k6);
            stage(y, h, {{A71, &k1}, {A73, &k3}, {A74, &k4}, {A75, &k5}, {A76, &k6}});
            f(ytmp, t + h, k7);  // FSAL stage, ytmp is the 5th-order solution

            const double err = error_norm(ytmp, h);
            if (err <= 1.0) {
                prepare_dense(ytmp, h);
                accept(ytmp, h);
                const double grow = (err == 0.0) ? 5.0 : std::min(5.0, 0.9 * std::pow(err, -0.2));
                return std::max(h * grow, min_step);
            }
            ++stats.rejected;
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
            h = std::min(h, windows.cap(t));
        }
    }

    void prepare_dense(const ComplexMatrix& y1, double h) {
        for (int i = 0; i < n * n; ++i) {
            const cdouble dy = y1.data()[i] - y.data()[i];
            const cdouble bspl = h * k1.data()[i] - dy;
            r2.data()[i] = dy;
            r3.data()[i] = bspl;
            r4.data()[i] = dy - h * k7.data()[i] - bspl;
            r5.data()[i] = h * (D1 * k1.data()[i] + D3 * k3.data()[i] + D4 * k4.data()[i] +
                                D5 * k5.data()[i] + D6 * k6.data()[i] + D7 * k7.data()[i]);
        }
    }

    void dense_at(double ts, ComplexMatrix& out) const {
        const double th = (ts - t_old) / h_last;
        const double th1 = 1.0 - th;
        for (int i = 0; i < n * n; ++i)
            out.data()[i] =
                y_old.data()[i] +
                th * (r2.data()[i] + th1 * (r3.data()[i] + th * (r4.data()[i] + th1 * r5.data()[i])));
    }

    void accept(const ComplexMatrix& y1, double h) {
        t_old = t;
        y_old = y;
        h_last = h;
        t += h;
        y = y1;
        // re-symmetrize and police the trace
        for (int r = 0; r < n; ++r) {
            y(r, r) = y(r, r).real();
            for (int c = r + 1; c < n; ++c) {
                const cdouble z = 0.5 * (y(r, c) + std::conj(y(c, r)));
                y(r, c) = z;
                y(c, r) = std::conj(z);
            }
        }
        const double tr = y.trace().real();
        const double drift = std::abs(tr - 1.0);
        stats.max_trace_drift = std::max(stats.max_trace_drift, drift);
        if (drift >= trace_drift_limit) {
            std::ostringstream msg;
            msg << "integration diverged: trace drift " << drift << " at t = " << t << " ns";
            throw std::runtime_error(msg.str());
        }
        y *= 1.0 / tr;
        k1 = k7;  // FSAL
        ++stats.steps;
    }
};

ComplexMatrix symmetrized_unit_trace(const ComplexMatrix& m) {
    ComplexMatrix out(m.dim());
    for (int r = 0; r < m.dim(); ++r)
        for (int c = 0; c < m.dim(); ++c) out(r, c) = 0.5 * (m(r, c) + std::conj(m(c, r)));
    const double tr = out.trace().real();
    if (tr != 0.0) out *= 1.0 / tr;
    return out;
}

struct EvolveOutput {
    Trajectory traj;
    double observable = 0.0;
};

double projector_expectation(const ComplexMatrix& p, const ComplexMatrix& rho) {
    cdouble s = 0.0;
    const int n = p.dim();
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) s += p(r, c) * rho(c, r);
    return s.real();
}

EvolveOutput evolve_core(const LindbladSystem& system, const DensityMatrix& rho0,
                         std::pair<double, double> t_span, const std::vector<double>& sample_times,
                         double rel_tol, double abs_tol, const ComplexMatrix* projector,
                         double weight) {
    const auto [t0, t1] = t_span;
    if (!(t1 > t0)) throw std::invalid_argument("evolve: t_span must be increasing");
    for (size_t i = 0; i < sample_times.size(); ++i) {
        if (sample_times[i] < t0 - 1e-12 || sample_times[i] > t1 + 1e-12)
            throw std::invalid_argument("evolve: sample time outside t_span");
        if (i > 0 && sample_times[i] <= sample_times[i - 1])
            throw std::invalid_argument("evolve: sample times must be strictly increasing");
    }

    EvolveOutput out;
    Dopri5 stepper(system, rho0.matrix(), rel_tol, abs_tol);
    stepper.t = t0;

    size_t next_sample = 0;
    auto emit_samples_through = [&](double t_hi) {
        ComplexMatrix buf(system.dim());
        while (next_sample < sample_times.size() && sample_times[next_sample] <= t_hi + 1e-15) {
            const double ts = sample_times[next_sample];
            if (stepper.stats.steps == 0 || ts <= stepper.t_old) {
                buf = stepper.y;  // sample at or before the very first step
            } else {
                stepper.dense_at(ts, buf);
            }
            out.traj.times.push_back(ts);
            out.traj.states.emplace_back(symmetrized_unit_trace(buf));
            ++next_sample;
        }
    };

    emit_samples_through(t0);  // samples exactly at t0

    double h = std::min(stepper.windows.cap(t0), t1 - t0);
    double obs_prev = projector ? projector_expectation(*projector, stepper.y) : 0.0;
    while (stepper.t < t1 - 1e-14) {
        h = stepper.step(h, t1);
        emit_samples_through(stepper.t);
        if (projector) {
            const double obs_now = projector_expectation(*projector, stepper.y);
            out.observable += 0.5 * (obs_prev + obs_now) * stepper.h_last;
            obs_prev = obs_now;
        }
    }
    emit_samples_through(t1);
    out.observable *= weight;

    out.traj.stats = stepper.stats;
    if (out.traj.times.empty()) {
        out.traj.times.push_back(t1);
        out.traj.states.emplace_back(symmetrized_unit_trace(stepper.y));
    }
    return out;
}

}  // namespace

Trajectory evolve(const LindbladSystem& system, const DensityMatrix& rho0,
                  std::pair<double, double> t_span, const std::vector<double>& sample_times,
                  double rel_tol, double abs_tol) {
    return evolve_core(system, rho0, t_span, sample_times, rel_tol, abs_tol, nullptr, 0.0).traj;
}

double integrate_observable(const LindbladSystem& system, const DensityMatrix& rho0,
                            std::pair<double, double> t_span, double weight,
                            const ComplexMatrix& projector, double rel_tol, double abs_tol) {
    if (weight < 0.0) throw std::invalid_argument("integrate_observable: weight must be >= 0");
    if (projector.herm_defect() > 1e-10)
        throw std::invalid_argument("integrate_observable: projector not Hermitian");
    ComplexMatrix p2(projector.dim());
    mul_into(p2, projector, projector);
    p2 -= projector;
    if (p2.max_abs() > 1e-10)
        throw std::invalid_argument("integrate_observable: projector not idempotent");
    if (weight == 0.0) return 0.0;
    return evolve_core(system, rho0, t_span, {}, rel_tol, abs_tol, &projector, weight).observable;
}

Ket evolve_unitary(const ComplexMatrix& h_static, const std::vector<HamiltonianTerm>& h_terms,
                   const Ket& psi0, std::pair<double, double> t_span, double dt) {
    const auto [t0, t1] = t_span;
    if (!(t1 > t0)) throw std::invalid_argument("evolve_unitary: t_span must be increasing");
    if (dt <= 0.0) throw std::invalid_argument("evolve_unitary: dt must be positive");
    const int n = h_static.dim();

    std::vector<std::pair<double, double>> windows;
    for (const auto& term : h_terms)
        if (term.coeff.support()) windows.push_back(*term.coeff.support());
    std::sort(windows.begin(), windows.end());
    if (!windows.empty() && dt > 1e-4)
        throw std::invalid_argument("evolve_unitary: dt must be <= 1e-4 ns inside pulse windows");

    auto hamiltonian_at = [&](double t) {
        ComplexMatrix h = h_static;
        for (const auto& term : h_terms) {
            const cdouble c = term.coeff.value(t);
            if (c == cdouble{0.0, 0.0}) continue;
            for (int r = 0; r < n; ++r)
                for (int col = 0; col < n; ++col) {
                    const cdouble z = c * term.op(r, col);
                    if (z != cdouble{0.0, 0.0}) {
                        h(r, col) += z;
                        h(col, r) += std::conj(z);
                    }
                }
        }
        return h;
    };

    auto apply_exp = [&](const ComplexMatrix& h, double step, Ket& psi) {
        ComplexMatrix g = h;
        g *= cdouble{0.0, -step};
        const ComplexMatrix u = expm(g);
        Ket next(n);
        for (int r = 0; r < n; ++r) {
            cdouble s = 0.0;
            for (int c = 0; c < n; ++c) s += u(r, c) * psi[c];
            next[r] = s;
        }
        psi = next;
    };

    Ket psi = psi0;
    double t = t0;
    while (t < t1 - 1e-15) {
        // find the next window boundary ahead of t
        double gap_end = t1;
        bool inside = false;
        for (const auto& [lo, hi] : windows) {
            if (t >= lo - 1e-15 && t < hi - 1e-15) {
                inside = true;
                gap_end = std::min(gap_end, hi);
                break;
            }
            if (t < lo) gap_end = std::min(gap_end, lo);
        }
        if (!inside) {
            // H is exactly h_static here; one exponential crosses the gap
            apply_exp(h_static, gap_end - t, psi);
            t = gap_end;
        } else {
            const double h = std::min(dt, gap_end - t);
            apply_exp(hamiltonian_at(t + 0.5 * h), h, psi);
            t += h;
            if (std::abs(psi.norm() - 1.0) > 1e-6)
                throw std::runtime_error("oracle step too coarse");
        }
    }
    if (std::abs(psi.norm() - 1.0) > 1e-6) throw std::runtime_error("oracle step too coarse");
    return psi;
}

}  // namespace qdsim
