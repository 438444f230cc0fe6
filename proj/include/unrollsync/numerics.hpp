#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace unrollsync {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Matrix transpose() const;
    double frobenius_norm() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

std::vector<double> matvec(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Complex vector stored as parallel real and imaginary arrays.
struct ComplexVector {
    std::vector<double> re;
    std::vector<double> im;

    ComplexVector() = default;
    explicit ComplexVector(std::size_t n) : re(n, 0.0), im(n, 0.0) {}
    ComplexVector(std::vector<double> r, std::vector<double> i);

    std::size_t size() const { return re.size(); }
    std::complex<double> operator[](std::size_t k) const { return {re[k], im[k]}; }
    void set(std::size_t k, std::complex<double> v) {
        re[k] = v.real();
        im[k] = v.imag();
    }
    double norm() const;

    bool operator==(const ComplexVector&) const = default;
};

/// Complex matrix stored as a pair of real matrices of identical shape.
struct ComplexMatrix {
    Matrix re;
    Matrix im;

    ComplexMatrix() = default;
    ComplexMatrix(std::size_t rows, std::size_t cols) : re(rows, cols), im(rows, cols) {}
    ComplexMatrix(Matrix r, Matrix i);

    std::size_t rows() const { return re.rows(); }
    std::size_t cols() const { return re.cols(); }
    std::complex<double> operator()(std::size_t i, std::size_t j) const { return {re(i, j), im(i, j)}; }
    void set(std::size_t i, std::size_t j, std::complex<double> v) {
        re(i, j) = v.real();
        im(i, j) = v.imag();
    }

    bool operator==(const ComplexMatrix&) const = default;
};

ComplexVector matvec(const ComplexMatrix& a, const ComplexVector& x);

/// DFT coefficients X[k], k = 0..L-1.
using Spectrum = ComplexVector;

/// X[k] = sum_n x[n] exp(-i 2 pi k n / L). Direct summation.
Spectrum dft(std::span<const double> signal);
Spectrum dft(const ComplexVector& signal);
/// x[n] = (1/L) sum_k X[k] exp(+i 2 pi k n / L).
ComplexVector idft(const Spectrum& spectrum);
/// Frequency index k mapped to (-L/2, L/2]: k for 2k <= L, else k - L.
double signed_frequency(std::size_t k, std::size_t length);

// ---------------------------------------------------------------------------
// 3x3 kernels
// ---------------------------------------------------------------------------

/// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

Mat3 mat3_identity();
Mat3 mat3_mul(const Mat3& a, const Mat3& b);
Mat3 mat3_transpose(const Mat3& a);
double mat3_det(const Mat3& a);
double mat3_frobenius(const Mat3& a);

struct Svd3 {
    Mat3 u;
    std::array<double, 3> sigma;  // descending, nonnegative
    Mat3 v;
};

/// Singular value decomposition A = U diag(sigma) V^T via one-sided Jacobi.
Svd3 svd3(const Mat3& a);

/// Nearest rotation to A in Frobenius norm. When det(U V^T) < 0 the column of
/// U paired with the smallest singular value is negated.
Mat3 project_so3(const Mat3& a);

/// Nearest orthogonal matrix U V^T (determinant may be -1).
Mat3 project_o3(const Mat3& a);

/// Block i (rows 3i..3i+2) of a 3N x 3 stack.
Mat3 get_block(const Matrix& stack, std::size_t i);
void set_block(Matrix& stack, std::size_t i, const Mat3& block);

// ---------------------------------------------------------------------------
// Eigenvectors
// ---------------------------------------------------------------------------

enum class EigenOrder {
    Algebraic,  ///< largest eigenvalues first
    Magnitude,  ///< largest |eigenvalue| first (equivalently, top singular vectors)
};

/// Leading k eigenvectors of a symmetric matrix by orthogonal (subspace)
/// iteration with QR re-orthonormalization and a final Rayleigh-Ritz step.
/// A few guard vectors beyond k are carried to speed up convergence. When the
/// relevant eigengap is ~0 the final iterate is still returned. Stops before
/// `iters` once the Ritz residuals fall below 1e-12 ||H||_F.
Matrix leading_eigvecs(const Matrix& h, std::size_t k, std::size_t iters,
                       EigenOrder order = EigenOrder::Algebraic);

/// In-place modified Gram-Schmidt on the columns of q (applied twice).
void orthonormalize_columns(Matrix& q);

/// Symmetric eigendecomposition of a small matrix by cyclic Jacobi; eigenvalues
/// ascending, eigenvectors in columns.
void symmetric_eigen_jacobi(const Matrix& a, std::vector<double>& values, Matrix& vectors);

}  // namespace unrollsync
