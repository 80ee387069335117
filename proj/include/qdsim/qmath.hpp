#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

namespace qdsim {

using cdouble = std::complex<double>;

/// Dense square complex matrix, row-major, dimension 1..16.
///
/// Small enough that everything is done with plain loops; there is no
/// sparse or blocked path anywhere in this project.
class ComplexMatrix {
  public:
    static constexpr int max_dim = 16;

    ComplexMatrix() = default;
    explicit ComplexMatrix(int dim);

    static ComplexMatrix identity(int dim);
    /// |i><j| basis matrix (projector when i == j).
    static ComplexMatrix unit(int dim, int i, int j);

    int dim() const { return dim_; }
    cdouble& operator()(int r, int c) { return a_[static_cast<size_t>(r) * dim_ + c]; }
    const cdouble& operator()(int r, int c) const { return a_[static_cast<size_t>(r) * dim_ + c]; }
    cdouble* data() { return a_.data(); }
    const cdouble* data() const { return a_.data(); }
    size_t size() const { return a_.size(); }

    ComplexMatrix adjoint() const;
    cdouble trace() const;
    double max_abs() const;   // largest entry modulus
    double one_norm() const;  // max column sum of moduli
    double herm_defect() const;  // max |a_ij - conj(a_ji)|
    bool is_hermitian(double tol) const { return herm_defect() <= tol; }
    bool all_finite() const;

    ComplexMatrix& operator+=(const ComplexMatrix& o);
    ComplexMatrix& operator-=(const ComplexMatrix& o);
    ComplexMatrix& operator*=(cdouble s);

    friend ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
    friend ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
    friend ComplexMatrix operator*(cdouble s, ComplexMatrix a) { return a *= s; }
    friend ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b);

  private:
    int dim_ = 0;
    std::vector<cdouble> a_;
};

/// out = a * b (dimensions must match; out may not alias a or b).
void mul_into(ComplexMatrix& out, const ComplexMatrix& a, const ComplexMatrix& b);
/// out += s * a
void add_scaled(ComplexMatrix& out, cdouble s, const ComplexMatrix& a);

/// State vector over the same small Hilbert spaces.
class Ket {
  public:
    Ket() = default;
    explicit Ket(int dim) : amp_(static_cast<size_t>(dim), cdouble{0.0, 0.0}) {}
    static Ket basis(int dim, int i);

    int dim() const { return static_cast<int>(amp_.size()); }
    cdouble& operator[](int i) { return amp_[static_cast<size_t>(i)]; }
    const cdouble& operator[](int i) const { return amp_[static_cast<size_t>(i)]; }
    double norm() const;
    void normalize();

  private:
    std::vector<cdouble> amp_;
};

struct EigenResult {
    std::vector<double> values;  // ascending
    ComplexMatrix vectors;       // orthonormal eigenvectors as columns
};

/// Hermitian eigendecomposition by cyclic Jacobi sweeps.
/// Throws std::invalid_argument("not Hermitian") if the input is not
/// Hermitian within 1e-10 (relative to the entry scale).
EigenResult herm_eigen(const ComplexMatrix& m);

/// Matrix exponential, scaling-and-squaring with a Taylor core.
ComplexMatrix expm(const ComplexMatrix& m);

/// Real rectangular matrix used only as a least-squares design matrix.
class RealMatrix {
  public:
    RealMatrix(int rows, int cols)
        : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, 0.0) {}
    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& operator()(int r, int c) { return a_[static_cast<size_t>(r) * cols_ + c]; }
    const double& operator()(int r, int c) const { return a_[static_cast<size_t>(r) * cols_ + c]; }

  private:
    int rows_, cols_;
    std::vector<double> a_;
};

struct LstsqResult {
    std::vector<double> coefficients;
    double residual_norm = 0.0;
    double condition = 0.0;  // diagonal-ratio estimate from the pivoted R factor
};

/// Linear least squares min ||design x - obs|| by Householder QR with
/// column pivoting. Rank deficiency throws std::runtime_error whose
/// message names the null direction.
LstsqResult lstsq(const RealMatrix& design, std::span<const double> obs);

}  // namespace qdsim
