#include "qdsim/qmath.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace qdsim {

namespace {

void check_dim(int dim) {
    if (dim < 1 || dim > ComplexMatrix::max_dim)
        throw std::invalid_argument("matrix dimension must be in 1.." +
                                    std::to_string(ComplexMatrix::max_dim));
}

}  // namespace

ComplexMatrix::ComplexMatrix(int dim) : dim_(dim) {
    check_dim(dim);
    a_.assign(static_cast<size_t>(dim) * dim, cdouble{0.0, 0.0});
}

ComplexMatrix ComplexMatrix::identity(int dim) {
    ComplexMatrix m(dim);
    for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
}

ComplexMatrix ComplexMatrix::unit(int dim, int i, int j) {
    ComplexMatrix m(dim);
    if (i < 0 || i >= dim || j < 0 || j >= dim)
        throw std::invalid_argument("unit: index out of range");
    m(i, j) = 1.0;
    return m;
}

ComplexMatrix ComplexMatrix::adjoint() const {
    ComplexMatrix m(dim_);
    for (int r = 0; r < dim_; ++r)
        for (int c = 0; c < dim_; ++c) m(c, r) = std::conj((*this)(r, c));
    return m;
}

cdouble ComplexMatrix::trace() const {
    cdouble t = 0.0;
    for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
}

double ComplexMatrix::max_abs() const {
    double m = 0.0;
    for (const cdouble& z : a_) m = std::max(m, std::abs(z));
    return m;
}

double ComplexMatrix::one_norm() const {
    double best = 0.0;
    for (int c = 0; c < dim_; ++c) {
        double s = 0.0;
        for (int r = 0; r < dim_; ++r) s += std::abs((*this)(r, c));
        best = std::max(best, s);
    }
    return best;
}

double ComplexMatrix::herm_defect() const {
    double d = 0.0;
    for (int r = 0; r < dim_; ++r)
        for (int c = r; c < dim_; ++c)
            d = std::max(d, std::abs((*this)(r, c) - std::conj((*this)(c, r))));
    return d;
}

bool ComplexMatrix::all_finite() const {
    for (const cdouble& z : a_)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

ComplexMatrix& ComplexMatrix::operator+=(const ComplexMatrix& o) {
    for (size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
    return *this;
}

ComplexMatrix& ComplexMatrix::operator-=(const ComplexMatrix& o) {
    for (size_t i = 0; i < a_.size(); ++i) a_[i] -= o.a_[i];
    return *this;
}

ComplexMatrix& ComplexMatrix::operator*=(cdouble s) {
    for (cdouble& z : a_) z *= s;
    return *this;
}

ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.dim());
    mul_into(out, a, b);
    return out;
}

void mul_into(ComplexMatrix& out, const ComplexMatrix& a, const ComplexMatrix& b) {
    const int n = a.dim();
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            cdouble s = 0.0;
            for (int k = 0; k < n; ++k) s += a(r, k) * b(k, c);
            out(r, c) = s;
        }
    }
}

void add_scaled(ComplexMatrix& out, cdouble s, const ComplexMatrix& a) {
    const int n = out.dim();
    for (int i = 0; i < n * n; ++i) out.data()[i] += s * a.data()[i];
}

Ket Ket::basis(int dim, int i) {
    Ket k(dim);
    k[i] = 1.0;
    return k;
}

double Ket::norm() const {
    double s = 0.0;
    for (const cdouble& z : amp_) s += std::norm(z);
    return std::sqrt(s);
}

void Ket::normalize() {
    double n = norm();
    if (n > 0.0)
        for (cdouble& z : amp_) z /= n;
}

EigenResult herm_eigen(const ComplexMatrix& m) {
    const int n = m.dim();
    const double scale = std::max(1.0, m.max_abs());
    if (m.herm_defect() > 1e-10 * scale) throw std::invalid_argument("not Hermitian");

    ComplexMatrix a = m;
    // symmetrize away the sub-tolerance defect so the iteration sees
    // an exactly Hermitian matrix
    for (int r = 0; r < n; ++r) {
        a(r, r) = a(r, r).real();
        for (int c = r + 1; c < n; ++c) {
            cdouble z = 0.5 * (a(r, c) + std::conj(a(c, r)));
            a(r, c) = z;
            a(c, r) = std::conj(z);
        }
    }

    ComplexMatrix v = ComplexMatrix::identity(n);
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += std::norm(a(p, q));
        if (std::sqrt(off) <= 1e-15 * scale * n) break;

        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = std::abs(a(p, q));
                if (apq <= 1e-300) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const cdouble phase = a(p, q) / apq;
                const double tau = (a(q, q).real() - a(p, p).real()) / (2.0 * apq);
                const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                              : -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                const cdouble spq = s * phase;        // U(p,q)
                const cdouble sqp = -s * std::conj(phase);  // U(q,p)

                // A <- A U (columns p, q)
                for (int k = 0; k < n; ++k) {
                    const cdouble akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp + sqp * akq;
                    a(k, q) = spq * akp + c * akq;
                }
                // A <- U^dagger A (rows p, q)
                for (int k = 0; k < n; ++k) {
                    const cdouble apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk + std::conj(sqp) * aqk;
                    a(q, k) = std::conj(spq) * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                a(p, p) = a(p, p).real();
                a(q, q) = a(q, q).real();
                // V <- V U
                for (int k = 0; k < n; ++k) {
                    const cdouble vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp + sqp * vkq;
                    v(k, q) = spq * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int i, int j) { return a(i, i).real() < a(j, j).real(); });

    EigenResult res;
    res.values.resize(static_cast<size_t>(n));
    res.vectors = ComplexMatrix(n);
    for (int c = 0; c < n; ++c) {
        res.values[static_cast<size_t>(c)] = a(order[static_cast<size_t>(c)], order[static_cast<size_t>(c)]).real();
        for (int r = 0; r < n; ++r) res.vectors(r, c) = v(r, order[static_cast<size_t>(c)]);
    }
    return res;
}

ComplexMatrix expm(const ComplexMatrix& m) {
    if (!m.all_finite()) throw std::invalid_argument("expm: non-finite entry");
    const int n = m.dim();
    const double norm = m.one_norm();

    int squarings = 0;
    if (norm > 0.25) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.25)));
    ComplexMatrix b = m;
    b *= std::ldexp(1.0, -squarings);

    ComplexMatrix sum = ComplexMatrix::identity(n);
    ComplexMatrix term = ComplexMatrix::identity(n);
    ComplexMatrix tmp(n);
    for (int k = 1; k <= 30; ++k) {
        mul_into(tmp, term, b);
        term = tmp;
        term *= 1.0 / k;
        sum += term;
        if (term.max_abs() <= 1e-18 * std::max(1.0, sum.max_abs())) break;
    }
    for (int s = 0; s < squarings; ++s) {
        mul_into(tmp, sum, sum);
        sum = tmp;
    }
    return sum;
}

LstsqResult lstsq(const RealMatrix& design, std::span<const double> obs) {
    const int n = design.rows();
    const int p = design.cols();
    if (static_cast<int>(obs.size()) != n)
        throw std::invalid_argument("lstsq: observation length mismatch");
    if (n < p) throw std::invalid_argument("lstsq: fewer rows than unknowns");

    // Householder QR with column pivoting, applied to the stacked [A | b].
    RealMatrix a = design;
    std::vector<double> b(obs.begin(), obs.end());
    std::vector<int> piv(static_cast<size_t>(p));
    std::iota(piv.begin(), piv.end(), 0);

    std::vector<double> colnorm(static_cast<size_t>(p), 0.0);
    for (int c = 0; c < p; ++c)
        for (int r = 0; r < n; ++r) colnorm[static_cast<size_t>(c)] += a(r, c) * a(r, c);

    double rmax = 0.0;
    int rank = p;
    for (int k = 0; k < p; ++k) {
        // pivot the largest remaining column
        int best = k;
        double bestn = -1.0;
        for (int c = k; c < p; ++c) {
            double s = 0.0;
            for (int r = k; r < n; ++r) s += a(r, c) * a(r, c);
            if (s > bestn) { bestn = s; best = c; }
        }
        if (best != k) {
            for (int r = 0; r < n; ++r) std::swap(a(r, k), a(r, best));
            std::swap(piv[static_cast<size_t>(k)], piv[static_cast<size_t>(best)]);
        }

        double alpha = std::sqrt(bestn);
        if (k == 0) rmax = std::max(alpha, 1e-300);
        if (alpha <= 1e-13 * rmax) { rank = k; break; }

        if (a(k, k) > 0) alpha = -alpha;
        std::vector<double> vhh(static_cast<size_t>(n - k), 0.0);
        vhh[0] = a(k, k) - alpha;
        for (int r = k + 1; r < n; ++r) vhh[static_cast<size_t>(r - k)] = a(r, k);
        double vnorm2 = 0.0;
        for (double x : vhh) vnorm2 += x * x;
        if (vnorm2 > 0.0) {
            for (int c = k; c < p; ++c) {
                double dot = 0.0;
                for (int r = k; r < n; ++r) dot += vhh[static_cast<size_t>(r - k)] * a(r, c);
                const double f = 2.0 * dot / vnorm2;
                for (int r = k; r < n; ++r) a(r, c) -= f * vhh[static_cast<size_t>(r - k)];
            }
            double dot = 0.0;
            for (int r = k; r < n; ++r) dot += vhh[static_cast<size_t>(r - k)] * b[static_cast<size_t>(r)];
            const double f = 2.0 * dot / vnorm2;
            for (int r = k; r < n; ++r) b[static_cast<size_t>(r)] -= f * vhh[static_cast<size_t>(r - k)];
        }
        a(k, k) = alpha;
        for (int r = k + 1; r < n; ++r) a(r, k) = 0.0;
    }

    if (rank < p) {
        // null direction: R11 y = -R12 for the first deficient pivot column
        std::vector<double> null(static_cast<size_t>(p), 0.0);
        null[static_cast<size_t>(piv[static_cast<size_t>(rank)])] = 1.0;
        std::vector<double> y(static_cast<size_t>(rank), 0.0);
        for (int i = rank - 1; i >= 0; --i) {
            double s = -a(i, rank);
            for (int j = i + 1; j < rank; ++j) s -= a(i, j) * y[static_cast<size_t>(j)];
            y[static_cast<size_t>(i)] = s / a(i, i);
        }
        double nn = 1.0;
        for (double x : y) nn += x * x;
        nn = std::sqrt(nn);
        std::ostringstream msg;
        msg << "degenerate fit: null direction ~ (";
        for (int i = 0; i < rank; ++i)
            null[static_cast<size_t>(piv[static_cast<size_t>(i)])] = y[static_cast<size_t>(i)];
        for (int i = 0; i < p; ++i) {
            if (i) msg << ", ";
            msg << null[static_cast<size_t>(i)] / nn;
        }
        msg << ")";
        throw std::runtime_error(msg.str());
    }

    LstsqResult res;
    res.coefficients.assign(static_cast<size_t>(p), 0.0);
    std::vector<double> x(static_cast<size_t>(p), 0.0);
    for (int i = p - 1; i >= 0; --i) {
        double s = b[static_cast<size_t>(i)];
        for (int j = i + 1; j < p; ++j) s -= a(i, j) * x[static_cast<size_t>(j)];
        x[static_cast<size_t>(i)] = s / a(i, i);
    }
    for (int i = 0; i < p; ++i) res.coefficients[static_cast<size_t>(piv[static_cast<size_t>(i)])] = x[static_cast<size_t>(i)];

    double rn = 0.0;
    for (int r = p; r < n; ++r) rn += b[static_cast<size_t>(r)] * b[static_cast<size_t>(r)];
    res.residual_norm = std::sqrt(rn);
    res.condition = std::abs(a(0, 0)) / std::abs(a(p - 1, p - 1));
    return res;
}

}  // namespace qdsim
