#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "qdsim/qmath.hpp"

namespace qdsim {

/// Deterministic map t (ns) -> complex coefficient, optionally with a
/// support window outside of which the value is exactly zero. The window
/// is what lets the integrator take long steps between pulses.
class TimeCoefficient {
  public:
    TimeCoefficient() : constant_(cdouble{0.0, 0.0}) {}

    static TimeCoefficient constant(cdouble value) {
        TimeCoefficient c;
        c.constant_ = value;
        return c;
    }
    static TimeCoefficient windowed(std::function<cdouble(double)> fn, double t_lo, double t_hi) {
        TimeCoefficient c;
        c.fn_ = std::move(fn);
        c.window_ = {t_lo, t_hi};
        return c;
    }
    static TimeCoefficient unbounded(std::function<cdouble(double)> fn) {
        TimeCoefficient c;
        c.fn_ = std::move(fn);
        return c;
    }

    cdouble value(double t) const {
        if (!fn_) return constant_;
        if (window_ && (t < window_->first || t > window_->second)) return {0.0, 0.0};
        return fn_(t);
    }
    bool is_constant() const { return !fn_; }
    const std::optional<std::pair<double, double>>& support() const { return window_; }

  private:
    std::function<cdouble(double)> fn_;
    cdouble constant_{0.0, 0.0};
    std::optional<std::pair<double, double>> window_;
};

/// One Hamiltonian drive term: coeff(t) * op + h.c. is added to H(t).
struct HamiltonianTerm {
    ComplexMatrix op;
    TimeCoefficient coeff;  // rad/ns
};

/// One collapse channel: the effective operator at time t is
/// amplitude(t) * op, so the dissipation rate scales as amplitude(t)^2.
struct CollapseChannel {
    ComplexMatrix op;
    TimeCoefficient amplitude;  // real, >= 0, in sqrt(1/ns)
};

/// Density matrix with the usual physicality checks.
class DensityMatrix {
  public:
    DensityMatrix() = default;
    explicit DensityMatrix(const ComplexMatrix& rho);  // validates
    static DensityMatrix pure(const Ket& psi);
    static DensityMatrix pure_basis(int dim, int i);

    const ComplexMatrix& matrix() const { return rho_; }
    int dim() const { return rho_.dim(); }
    double population(int i) const { return rho_(i, i).real(); }
    cdouble coherence(int i, int j) const { return rho_(i, j); }

    static constexpr double herm_tol = 1e-10;
    static constexpr double trace_tol = 1e-8;
    static constexpr double eigen_floor = -1e-8;

    /// Hermitian within herm_tol, unit trace within trace_tol,
    /// min eigenvalue >= eigen_floor.
    static bool is_physical(const ComplexMatrix& rho, std::string* why = nullptr);

  private:
    ComplexMatrix rho_;
};

class LindbladSystem {
  public:
    LindbladSystem(ComplexMatrix h_static, std::vector<HamiltonianTerm> h_terms,
                   std::vector<CollapseChannel> collapse);

    int dim() const { return h_static_.dim(); }
    const ComplexMatrix& h_static() const { return h_static_; }
    const std::vector<HamiltonianTerm>& h_terms() const { return h_terms_; }
    const std::vector<CollapseChannel>& collapse() const { return collapse_; }

    /// H(t) = h_static + sum coeff(t) op + h.c.; Hermitian by construction.
    ComplexMatrix hamiltonian(double t) const;

  private:
    ComplexMatrix h_static_;
    std::vector<HamiltonianTerm> h_terms_;
    std::vector<CollapseChannel> collapse_;

    // precomputed per channel for the right-hand side
    struct ChannelData {
        ComplexMatrix op, op_adj, ctc;
        bool single_entry = false;  // op has exactly one nonzero entry
        int row = 0, col = 0;
        double entry_norm2 = 0.0;
    };
    std::vector<ChannelData> channel_data_;

    friend class LindbladWorkspace;
    friend void rhs_into(const LindbladSystem&, const ComplexMatrix&, double, ComplexMatrix&,
                         ComplexMatrix&, ComplexMatrix&, ComplexMatrix&);
};

/// Lindblad generator: drho/dt = -i[H(t), rho] + sum_m a_m(t)^2 D[c_m] rho.
ComplexMatrix rhs(const LindbladSystem& system, const DensityMatrix& rho, double t);

struct IntegratorStats {
    long steps = 0;
    long rejected = 0;
    double max_trace_drift = 0.0;
};

struct Trajectory {
    std::vector<double> times;          // ns
    std::vector<DensityMatrix> states;  // at those times
    IntegratorStats stats;
};

struct Tolerances {
    double rel = 1e-8;
    double abs = 1e-10;
};

/// Adaptive Dormand-Prince 5(4) propagation of the master equation with
/// dense output at the requested sample times. Each accepted state is
/// re-symmetrized; trace drift below 1e-6 is renormalized away, above it
/// the integration aborts ("integration diverged"). The step size is
/// capped at window/600 inside any coefficient support window (this is
/// sigma_t/50 for the 12-sigma pulse windows built by the model layer)
/// and at 1 ps elsewhere.
Trajectory evolve(const LindbladSystem& system, const DensityMatrix& rho0,
                  std::pair<double, double> t_span, const std::vector<double>& sample_times,
                  double rel_tol, double abs_tol);

/// weight * integral of <projector> dt over t_span, accumulated on the
/// integrator's own accepted grid.
double integrate_observable(const LindbladSystem& system, const DensityMatrix& rho0,
                            std::pair<double, double> t_span, double weight,
                            const ComplexMatrix& projector, double rel_tol, double abs_tol);

/// Independent oracle: Schroedinger propagation by midpoint-exponential
/// steps psi <- expm(-i H(t + dt/2) dt) psi. Constant-H stretches outside
/// every support window are crossed in one exact step.
Ket evolve_unitary(const ComplexMatrix& h_static, const std::vector<HamiltonianTerm>& h_terms,
                   const Ket& psi0, std::pair<double, double> t_span, double dt);

}  // namespace qdsim
