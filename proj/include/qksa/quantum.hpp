#pragma once

// Dense density-matrix algebra for small qubit registers: Pauli strings,
// unitary/channel action, projective measurement and the Kraus / chi / Choi
// channel representations.
//
// Conventions used throughout:
//  * qubit 0 is the leftmost letter of a PauliString and the most
//    significant bit of a basis index;
//  * vec(A) is row-major, vec(A)[r*d + c] = A(r, c);
//  * Choi matrices are stored normalized (trace 1) with the channel acting on
//    the FIRST n qubits:  rho_Choi = (E (x) I)(|Omega><Omega|).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qksa/random.hpp"

namespace qksa {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using Index = Eigen::Index;

inline constexpr double kTolerance = 1e-10;
inline constexpr double kPsdTolerance = 1e-8;
inline constexpr double kChannelTolerance = 1e-8;
inline constexpr int kMaxQubits = 3;

class QuantumError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Process-wide tally of invariant validations. Every DensityMatrix and
/// QuantumChannel constructed is checked and counted here.
struct InvariantAudit
{
    std::atomic<std::uint64_t> density_checks{0};
    std::atomic<std::uint64_t> density_failures{0};
    std::atomic<std::uint64_t> channel_checks{0};
    std::atomic<std::uint64_t> channel_failures{0};
};

inline InvariantAudit& invariant_audit()
{
    static InvariantAudit audit;
    return audit;
}

// ---------------------------------------------------------------------------
// matrix helpers

inline bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

inline int qubit_count(Index dim)
{
    if (!is_power_of_two(dim))
        throw QuantumError("dimension " + std::to_string(dim) + " is not a power of 2");
    int n = 0;
    while ((Index{1} << n) < dim)
        ++n;
    return n;
}

inline Index dim_for(int n_qubits) { return Index{1} << n_qubits; }

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool approx_equal(const Matrix& a, const Matrix& b, double tol = kTolerance)
{
    return a.rows() == b.rows() && a.cols() == b.cols() && max_abs(a - b) <= tol;
}

inline Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

inline bool is_hermitian(const Matrix& m, double tol = kTolerance)
{
    return m.rows() == m.cols() && max_abs(m - m.adjoint()) <= tol;
}

inline bool is_unitary(const Matrix& u, double tol = kTolerance)
{
    return u.rows() == u.cols() &&
           approx_equal(u.adjoint() * u, Matrix::Identity(u.rows(), u.cols()), tol);
}

/// Kronecker product; a's index is the major index of the result.
inline Matrix tensor(const Matrix& a, const Matrix& b)
{
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Matrix tensor_power(const Matrix& a, int n)
{
    Matrix out = Matrix::Identity(1, 1);
    for (int k = 0; k < n; ++k)
        out = tensor(out, a);
    return out;
}

/// Eigenvalues (ascending) of the Hermitian part of m.
inline Eigen::VectorXd hermitian_eigenvalues(const Matrix& m)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(m), Eigen::EigenvaluesOnly);
    return solver.eigenvalues();
}

inline double min_eigenvalue(const Matrix& m) { return hermitian_eigenvalues(m).minCoeff(); }

/// Trace out the second factor of a (dim_a*dim_b)-dimensional operator.
inline Matrix partial_trace_second(const Matrix& m, Index dim_a, Index dim_b)
{
    Matrix out = Matrix::Zero(dim_a, dim_a);
    for (Index i = 0; i < dim_a; ++i)
        for (Index j = 0; j < dim_a; ++j)
            for (Index k = 0; k < dim_b; ++k)
                out(i, j) += m(i * dim_b + k, j * dim_b + k);
    return out;
}

/// Trace out the first factor of a (dim_a*dim_b)-dimensional operator.
inline Matrix partial_trace_first(const Matrix& m, Index dim_a, Index dim_b)
{
    Matrix out = Matrix::Zero(dim_b, dim_b);
    for (Index i = 0; i < dim_b; ++i)
        for (Index j = 0; j < dim_b; ++j)
            for (Index k = 0; k < dim_a; ++k)
                out(i, j) += m(k * dim_b + i, k * dim_b + j);
    return out;
}

inline double trace_distance(const Matrix& a, const Matrix& b)
{
    return 0.5 * hermitian_eigenvalues(a - b).cwiseAbs().sum();
}

/// Clip negative eigenvalues of the Hermitian part at zero and rescale to unit
/// trace.
inline Matrix project_psd(const Matrix& m)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hermitian_part(m));
    Eigen::VectorXd vals = solver.eigenvalues().cwiseMax(0.0);
    double const total = vals.sum();
    if (total <= 0.0)
        throw QuantumError("PSD projection produced the zero matrix");
    vals /= total;
    const Matrix& vecs = solver.eigenvectors();
    return vecs * vals.cast<Complex>().asDiagonal() * vecs.adjoint();
}

/// Row-major vectorization, vec(A)[r*d + c] = A(r, c).
inline Vector vectorize(const Matrix& a)
{
    Vector v(a.size());
    for (Index r = 0; r < a.rows(); ++r)
        for (Index c = 0; c < a.cols(); ++c)
            v(r * a.cols() + c) = a(r, c);
    return v;
}

inline Matrix unvectorize(const Vector& v, Index d)
{
    Matrix a(d, d);
    for (Index r = 0; r < d; ++r)
        for (Index c = 0; c < d; ++c)
            a(r, c) = v(r * d + c);
    return a;
}

// ---------------------------------------------------------------------------
// basis states and outcome strings

/// Bitstring for an outcome index; qubit 0 is the leftmost character.
inline std::string outcome_bits(std::size_t outcome, int n_bits)
{
    std::string bits(static_cast<std::size_t>(n_bits), '0');
    for (int k = 0; k < n_bits; ++k)
        if ((outcome >> (n_bits - 1 - k)) & 1U)
            bits[static_cast<std::size_t>(k)] = '1';
    return bits;
}

inline std::size_t outcome_index(std::string_view bits)
{
    std::size_t index = 0;
    for (char c : bits) {
        if (c != '0' && c != '1')
            throw QuantumError("invalid bit '" + std::string(1, c) + "' in outcome string");
        index = (index << 1) | static_cast<std::size_t>(c == '1');
    }
    return index;
}

/// Computational basis ket, e.g. ket("01") = |01>.
inline Vector ket(std::string_view bits)
{
    Vector v = Vector::Zero(dim_for(static_cast<int>(bits.size())));
    v(static_cast<Index>(outcome_index(bits))) = 1.0;
    return v;
}

/// |Omega> = sum_i |i>|i> / sqrt(2^n) on 2n qubits.
inline Vector omega_state(int n_qubits)
{
    Index const d = dim_for(n_qubits);
    Vector v = Vector::Zero(d * d);
    for (Index i = 0; i < d; ++i)
        v(i * d + i) = 1.0;
    return v / std::sqrt(static_cast<double>(d));
}

// ---------------------------------------------------------------------------
// DensityMatrix

class DensityMatrix
{
public:
    explicit DensityMatrix(Matrix m) : m_(std::move(m))
    {
        if (auto problem = check(m_))
            throw QuantumError("invalid density matrix: " + *problem);
    }

    /// Returns a description of the first violated invariant, if any.
    static std::optional<std::string> check(const Matrix& m)
    {
        auto& audit = invariant_audit();
        ++audit.density_checks;
        auto fail = [&](std::string why) -> std::optional<std::string> {
            ++audit.density_failures;
            return why;
        };
        if (m.rows() != m.cols() || !is_power_of_two(m.rows()))
            return fail("shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
        if (m.rows() > dim_for(2 * kMaxQubits))
            return fail("more than " + std::to_string(2 * kMaxQubits) + " qubits");
        if (!is_hermitian(m, kTolerance))
            return fail("not Hermitian");
        if (std::abs(m.trace() - Complex(1.0)) > kTolerance)
            return fail("trace " + std::to_string(m.trace().real()) + " != 1");
        if (min_eigenvalue(m) < -kPsdTolerance)
            return fail("negative eigenvalue " + std::to_string(min_eigenvalue(m)));
        return std::nullopt;
    }

    static DensityMatrix pure(const Vector& psi)
    {
        if (std::abs(psi.squaredNorm() - 1.0) > kTolerance)
            throw QuantumError("state vector is not normalized");
        return DensityMatrix(psi * psi.adjoint());
    }

    static DensityMatrix basis_state(std::string_view bits) { return pure(ket(bits)); }

    static DensityMatrix maximally_mixed(int n_qubits)
    {
        Index const d = dim_for(n_qubits);
        return DensityMatrix(Matrix::Identity(d, d) / static_cast<double>(d));
    }

    int n_qubits() const { return qubit_count(m_.rows()); }
    Index dim() const { return m_.rows(); }
    const Matrix& matrix() const { return m_; }

    bool approx_equal(const DensityMatrix& other, double tol = kTolerance) const
    {
        return qksa::approx_equal(m_, other.m_, tol);
    }

private:
    Matrix m_;
};

// ---------------------------------------------------------------------------
// Pauli algebra

enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

inline Matrix pauli_matrix(Pauli p)
{
    Matrix m(2, 2);
    Complex const i(0.0, 1.0);
    switch (p) {
    case Pauli::I: m << 1, 0, 0, 1; break;
    case Pauli::X: m << 0, 1, 1, 0; break;
    case Pauli::Y: m << 0, -i, i, 0; break;
    case Pauli::Z: m << 1, 0, 0, -1; break;
    }
    return m;
}

inline char pauli_char(Pauli p) { return "IXYZ"[static_cast<int>(p)]; }

class PauliString
{
public:
    PauliString() = default;
    explicit PauliString(std::vector<Pauli> letters) : letters_(std::move(letters)) {}

    static PauliString parse(std::string_view text)
    {
        std::vector<Pauli> letters;
        letters.reserve(text.size());
        for (char c : text) {
            switch (c) {
            case 'I': case '_': letters.push_back(Pauli::I); break;
            case 'X': letters.push_back(Pauli::X); break;
            case 'Y': letters.push_back(Pauli::Y); break;
            case 'Z': letters.push_back(Pauli::Z); break;
            default: throw QuantumError("invalid Pauli letter '" + std::string(1, c) + "'");
            }
        }
        return PauliString(std::move(letters));
    }

    /// Base-4 digits in I, X, Y, Z order; qubit 0 is the most significant.
    static PauliString from_index(std::size_t index, int n_qubits)
    {
        std::vector<Pauli> letters(static_cast<std::size_t>(n_qubits));
        for (int k = n_qubits - 1; k >= 0; --k) {
            letters[static_cast<std::size_t>(k)] = static_cast<Pauli>(index % 4);
            index /= 4;
        }
        return PauliString(std::move(letters));
    }

    std::size_t index() const
    {
        std::size_t index = 0;
        for (Pauli p : letters_)
            index = index * 4 + static_cast<std::size_t>(p);
        return index;
    }

    int n_qubits() const { return static_cast<int>(letters_.size()); }
    Pauli operator[](int k) const { return letters_[static_cast<std::size_t>(k)]; }
    const std::vector<Pauli>& letters() const { return letters_; }

    bool has_identity() const
    {
        for (Pauli p : letters_)
            if (p == Pauli::I)
                return true;
        return false;
    }

    bool is_identity() const
    {
        for (Pauli p : letters_)
            if (p != Pauli::I)
                return false;
        return true;
    }

    Matrix matrix() const
    {
        Matrix out = Matrix::Identity(1, 1);
        for (Pauli p : letters_)
            out = tensor(out, pauli_matrix(p));
        return out;
    }

    std::string str() const
    {
        std::string s;
        for (Pauli p : letters_)
            s.push_back(pauli_char(p));
        return s;
    }

    friend bool operator==(const PauliString&, const PauliString&) = default;
    friend auto operator<=>(const PauliString& a, const PauliString& b)
    {
        return a.index() <=> b.index();
    }

private:
    std::vector<Pauli> letters_;
};

/// All 4^n Pauli strings in index order (II..I first).
inline std::vector<PauliString> all_pauli_strings(int n_qubits)
{
    std::size_t const count = std::size_t{1} << (2 * n_qubits);
    std::vector<PauliString> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k)
        out.push_back(PauliString::from_index(k, n_qubits));
    return out;
}

/// The 3^n identity-free measurement bases, per-qubit order {Z, X, Y}, qubit 0
/// most significant.
inline std::vector<PauliString> full_weight_bases(int n_qubits)
{
    static constexpr Pauli order[3] = {Pauli::Z, Pauli::X, Pauli::Y};
    std::size_t count = 1;
    for (int k = 0; k < n_qubits; ++k)
        count *= 3;
    std::vector<PauliString> out;
    out.reserve(count);
    for (std::size_t idx = 0; idx < count; ++idx) {
        std::vector<Pauli> letters(static_cast<std::size_t>(n_qubits));
        std::size_t rest = idx;
        for (int k = n_qubits - 1; k >= 0; --k) {
            letters[static_cast<std::size_t>(k)] = order[rest % 3];
            rest /= 3;
        }
        out.emplace_back(std::move(letters));
    }
    return out;
}

inline double expectation(const DensityMatrix& rho, const PauliString& observable)
{
    if (observable.n_qubits() != rho.n_qubits())
        throw QuantumError("observable acts on " + std::to_string(observable.n_qubits()) +
                           " qubits, state has " + std::to_string(rho.n_qubits()));
    Complex const value = (observable.matrix() * rho.matrix()).trace();
    if (std::abs(value.imag()) > kTolerance)
        throw QuantumError("expectation value has imaginary part " + std::to_string(value.imag()));
    return value.real();
}

inline DensityMatrix apply_unitary(const DensityMatrix& rho, const Matrix& u)
{
    if (u.rows() != rho.dim() || u.cols() != rho.dim())
        throw QuantumError("unitary dimension does not match state");
    if (!is_unitary(u, kTolerance))
        throw QuantumError("operator is not unitary");
    return DensityMatrix(hermitian_part(u * rho.matrix() * u.adjoint()));
}

// ---------------------------------------------------------------------------
// projective measurement

/// Projector onto outcome `outcome` of a full-weight Pauli basis:
/// prod_k (I + (-1)^{b_k} P_k) / 2.  Bit value 0 is the +1 eigenspace.
inline Matrix outcome_projector(const PauliString& basis, std::size_t outcome)
{
    int const n = basis.n_qubits();
    Matrix out = Matrix::Identity(1, 1);
    Matrix const id = Matrix::Identity(2, 2);
    for (int k = 0; k < n; ++k) {
        double const sign = ((outcome >> (n - 1 - k)) & 1U) ? -1.0 : 1.0;
        out = tensor(out, 0.5 * (id + sign * pauli_matrix(basis[k])));
    }
    return out;
}

/// Single-qubit rotation taking the eigenbasis of p to the computational basis
/// (+1 eigenvector -> |0>).
inline Matrix basis_rotation(Pauli p)
{
    Matrix m(2, 2);
    double const r = 1.0 / std::sqrt(2.0);
    Complex const i(0.0, 1.0);
    switch (p) {
    case Pauli::X: m << r, r, r, -r; break;             // H
    case Pauli::Y: m << r, -i * r, r, i * r; break;     // H S^dagger
    default: m = Matrix::Identity(2, 2); break;
    }
    return m;
}

/// Born-rule outcome distribution for measuring every qubit in `basis`.
inline std::vector<double> outcome_probabilities(const DensityMatrix& rho, const PauliString& basis)
{
    if (basis.n_qubits() != rho.n_qubits())
        throw QuantumError("measurement basis covers " + std::to_string(basis.n_qubits()) +
                           " qubits, state has " + std::to_string(rho.n_qubits()));
    if (basis.has_identity())
        throw QuantumError("measurement basis '" + basis.str() + "' leaves a qubit unmeasured");
    Matrix rot = Matrix::Identity(1, 1);
    for (Pauli p : basis.letters())
        rot = tensor(rot, basis_rotation(p));
    Matrix const rotated = rot * rho.matrix() * rot.adjoint();
    std::vector<double> probs(static_cast<std::size_t>(rho.dim()));
    double total = 0.0;
    for (Index k = 0; k < rho.dim(); ++k) {
        double const p = std::max(0.0, rotated(k, k).real());
        probs[static_cast<std::size_t>(k)] = p;
        total += p;
    }
    if (std::abs(total - 1.0) > kTolerance)
        throw QuantumError("outcome probabilities sum to " + std::to_string(total));
    for (double& p : probs)
        p /= total;
    return probs;
}

/// Draw an index from a discrete distribution; never returns a zero-probability
/// entry.
inline std::size_t sample_index(const std::vector<double>& probs, RandomSource& rng)
{
    double const u = rng.uniform();
    double cumulative = 0.0;
    std::size_t last_positive = probs.size();
    for (std::size_t k = 0; k < probs.size(); ++k) {
        if (probs[k] <= 0.0)
            continue;
        last_positive = k;
        cumulative += probs[k];
        if (u < cumulative)
            return k;
    }
    if (last_positive == probs.size())
        throw QuantumError("cannot sample from an all-zero distribution");
    return last_positive;
}

struct Measurement
{
    std::string outcome;
    DensityMatrix collapsed;
};

inline Measurement measure_projective(const DensityMatrix& rho, const PauliString& basis,
                                      RandomSource& rng)
{
    auto const probs = outcome_probabilities(rho, basis);
    std::size_t const k = sample_index(probs, rng);
    if (probs[k] <= 0.0)
        throw QuantumError("selected a zero-probability measurement branch");
    Matrix const proj = outcome_projector(basis, k);
    Matrix post = proj * rho.matrix() * proj;
    post /= post.trace().real();
    return {outcome_bits(k, basis.n_qubits()), DensityMatrix(hermitian_part(post))};
}

// ---------------------------------------------------------------------------
// channel representations

enum class ChannelForm { kraus, chi, choi };

inline const char* to_string(ChannelForm f)
{
    switch (f) {
    case ChannelForm::kraus: return "kraus";
    case ChannelForm::chi: return "chi";
    case ChannelForm::choi: return "choi";
    }
    return "?";
}

namespace detail {

/// Columns are vec(B_m) for the given operator basis.
inline Matrix basis_columns(const std::vector<PauliString>& basis, Index d)
{
    Matrix w(d * d, static_cast<Index>(basis.size()));
    for (std::size_t m = 0; m < basis.size(); ++m) {
        Matrix const b = basis[m].matrix();
        if (b.rows() != d)
            throw QuantumError("basis element '" + basis[m].str() + "' has wrong dimension");
        w.col(static_cast<Index>(m)) = vectorize(b);
    }
    return w;
}

inline void require_pauli_basis(const std::vector<PauliString>& basis, Index d)
{
    std::size_t const expected = static_cast<std::size_t>(d * d);
    if (basis.size() != expected)
        throw QuantumError("operator basis needs " + std::to_string(expected) + " elements");
}

} // namespace detail

/// Unnormalized Choi (d * rho_Choi) from Kraus operators.
inline Matrix kraus_to_choi_matrix(const std::vector<Matrix>& kraus)
{
    Index const d = kraus.front().rows();
    Matrix j = Matrix::Zero(d * d, d * d);
    for (const Matrix& a : kraus) {
        Vector const v = vectorize(a);
        j += v * v.adjoint();
    }
    return j;
}

/// Kraus operators from a Choi matrix (normalized); eigenvalues below 1e-12
/// are dropped.
inline std::vector<Matrix> choi_to_kraus(const DensityMatrix& choi)
{
    Index const d = Index{1} << (choi.n_qubits() / 2);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(static_cast<double>(d) * choi.matrix());
    std::vector<Matrix> ops;
    for (Index k = solver.eigenvalues().size() - 1; k >= 0; --k) {
        double const lambda = solver.eigenvalues()(k);
        if (lambda <= 1e-12)
            continue;
        ops.push_back(std::sqrt(lambda) * unvectorize(solver.eigenvectors().col(k), d));
    }
    return ops;
}

/// chi (in `basis`) -> normalized Choi matrix (unvalidated).
inline Matrix chi_to_choi_matrix(const Matrix& chi, const std::vector<PauliString>& basis)
{
    Index const d = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(chi.rows()))));
    if (chi.rows() != chi.cols() || d * d != chi.rows() || !is_power_of_two(d))
        throw QuantumError("chi matrix must be 4^n x 4^n");
    detail::require_pauli_basis(basis, d);
    Matrix const w = detail::basis_columns(basis, d);
    return w * chi * w.adjoint() / static_cast<double>(d);
}

inline DensityMatrix chi_to_choi(const Matrix& chi, const std::vector<PauliString>& basis)
{
    if (!is_hermitian(chi, kTolerance))
        throw QuantumError("chi matrix is not Hermitian");
    return DensityMatrix(hermitian_part(chi_to_choi_matrix(chi, basis)));
}

inline Matrix choi_to_chi(const DensityMatrix& choi, const std::vector<PauliString>& basis)
{
    Index const d = Index{1} << (choi.n_qubits() / 2);
    detail::require_pauli_basis(basis, d);
    Matrix const w = detail::basis_columns(basis, d);
    return hermitian_part(w.adjoint() * choi.matrix() * w / static_cast<double>(d));
}

/// A CPTP map stored in the representation it was built from; the normalized
/// Choi matrix is always available.
class QuantumChannel
{
public:
    static QuantumChannel from_kraus(std::vector<Matrix> ops)
    {
        if (auto problem = check_kraus(ops))
            throw QuantumError("invalid Kraus channel: " + *problem);
        Index const d = ops.front().rows();
        Matrix const choi = kraus_to_choi_matrix(ops) / static_cast<double>(d);
        return QuantumChannel(qubit_count(d), ChannelForm::kraus, std::move(ops), Matrix(),
                              validated_choi(hermitian_part(choi)));
    }

    /// chi in the Pauli basis ordered as all_pauli_strings(n).
    static QuantumChannel from_chi(Matrix chi)
    {
        if (!is_hermitian(chi, kTolerance)) {
            ++invariant_audit().channel_checks;
            ++invariant_audit().channel_failures;
            throw QuantumError("invalid chi channel: not Hermitian");
        }
        Index const d = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(chi.rows()))));
        int const n = qubit_count(d);
        Matrix const choi = chi_to_choi_matrix(chi, all_pauli_strings(n));
        return QuantumChannel(n, ChannelForm::chi, {}, hermitian_part(chi),
                              validated_choi(hermitian_part(choi)));
    }

    static QuantumChannel from_choi(const DensityMatrix& choi)
    {
        if (choi.n_qubits() % 2 != 0)
            throw QuantumError("Choi matrix must act on an even number of qubits");
        return QuantumChannel(choi.n_qubits() / 2, ChannelForm::choi, {}, Matrix(),
                              validated_choi(choi.matrix()));
    }

    static QuantumChannel identity(int n_qubits)
    {
        return from_kraus({Matrix::Identity(dim_for(n_qubits), dim_for(n_qubits))});
    }

    static QuantumChannel unitary(const Matrix& u)
    {
        if (!is_unitary(u, kTolerance))
            throw QuantumError("operator is not unitary");
        return from_kraus({u});
    }

    /// rho -> (1 - p) rho + p I/d.
    static QuantumChannel depolarizing(int n_qubits, double p)
    {
        if (p < 0.0 || p > 1.0)
            throw QuantumError("depolarizing strength out of range");
        Index const d2 = dim_for(2 * n_qubits);
        Matrix chi = Matrix::Zero(d2, d2);
        double const other = p / static_cast<double>(d2);
        chi(0, 0) = 1.0 - p + other;
        for (Index k = 1; k < d2; ++k)
            chi(k, k) = other;
        return from_chi(std::move(chi));
    }

    static std::optional<std::string> check_kraus(const std::vector<Matrix>& ops)
    {
        if (ops.empty())
            return std::string("empty Kraus list");
        Index const d = ops.front().rows();
        for (const Matrix& a : ops)
            if (a.rows() != d || a.cols() != d || !is_power_of_two(d))
                return std::string("Kraus operators must be square with equal power-of-2 size");
        if (d > dim_for(kMaxQubits))
            return std::string("more than " + std::to_string(kMaxQubits) + " qubits");
        Matrix sum = Matrix::Zero(d, d);
        for (const Matrix& a : ops)
            sum += a.adjoint() * a;
        double const dev = max_abs(sum - Matrix::Identity(d, d));
        if (dev > kChannelTolerance)
            return "sum of A^dagger A deviates from identity by " + std::to_string(dev);
        return std::nullopt;
    }

    /// CPTP check on a normalized Choi matrix: PSD, unit trace and
    /// tr_out(d * rho_Choi) = I.
    static std::optional<std::string> check_choi(const Matrix& choi)
    {
        auto& audit = invariant_audit();
        ++audit.channel_checks;
        auto fail = [&](std::string why) -> std::optional<std::string> {
            ++audit.channel_failures;
            return why;
        };
        if (auto problem = DensityMatrix::check(choi))
            return fail("Choi matrix " + *problem);
        int const two_n = qubit_count(choi.rows());
        if (two_n % 2 != 0)
            return fail("Choi matrix on odd number of qubits");
        Index const d = dim_for(two_n / 2);
        Matrix const reduced = partial_trace_first(static_cast<double>(d) * choi, d, d);
        double const dev = max_abs(reduced - Matrix::Identity(d, d));
        if (dev > kChannelTolerance)
            return fail("not trace preserving (partial trace deviates by " + std::to_string(dev) + ")");
        return std::nullopt;
    }

    int n_qubits() const { return n_; }
    Index dim() const { return dim_for(n_); }
    ChannelForm form() const { return form_; }
    const DensityMatrix& choi() const { return choi_; }

    std::vector<Matrix> kraus() const
    {
        return form_ == ChannelForm::kraus ? kraus_ : choi_to_kraus(choi_);
    }

    Matrix chi() const
    {
        return form_ == ChannelForm::chi ? chi_ : choi_to_chi(choi_, all_pauli_strings(n_));
    }

    /// Action on an arbitrary operator, evaluated through representation `via`.
    Matrix apply_operator(const Matrix& x, ChannelForm via) const
    {
        if (x.rows() != dim() || x.cols() != dim())
            throw QuantumError("operator dimension does not match channel");
        Index const d = dim();
        switch (via) {
        case ChannelForm::kraus: {
            Matrix out = Matrix::Zero(d, d);
            for (const Matrix& a : kraus())
                out += a * x * a.adjoint();
            return out;
        }
        case ChannelForm::chi: {
            auto const basis = all_pauli_strings(n_);
            std::vector<Matrix> mats;
            mats.reserve(basis.size());
            for (const auto& p : basis)
                mats.push_back(p.matrix());
            Matrix const c = chi();
            Matrix out = Matrix::Zero(d, d);
            for (std::size_t m = 0; m < mats.size(); ++m) {
                Matrix const left = mats[m] * x;
                for (std::size_t k = 0; k < mats.size(); ++k) {
                    Complex const coeff = c(static_cast<Index>(m), static_cast<Index>(k));
                    if (coeff != Complex(0.0))
                        out += coeff * left * mats[k].adjoint();
                }
            }
            return out;
        }
        case ChannelForm::choi: {
            // E(x) = d * tr_ref[rho_Choi (I (x) x^T)]
            Matrix const lifted = choi_.matrix() * tensor(Matrix::Identity(d, d), x.transpose());
            return static_cast<double>(d) * partial_trace_second(lifted, d, d);
        }
        }
        throw QuantumError("unknown channel form");
    }

    DensityMatrix apply(const DensityMatrix& rho) const { return apply(rho, form_); }

    DensityMatrix apply(const DensityMatrix& rho, ChannelForm via) const
    {
        if (rho.dim() != dim())
            throw QuantumError("state dimension does not match channel");
        return DensityMatrix(hermitian_part(apply_operator(rho.matrix(), via)));
    }

private:
    QuantumChannel(int n, ChannelForm form, std::vector<Matrix> kraus, Matrix chi, DensityMatrix choi)
        : n_(n), form_(form), kraus_(std::move(kraus)), chi_(std::move(chi)), choi_(std::move(choi))
    {
    }

    static DensityMatrix validated_choi(const Matrix& choi)
    {
        if (auto problem = check_choi(choi))
            throw QuantumError("channel is not CPTP: " + *problem);
        return DensityMatrix(choi);
    }

    int n_;
    ChannelForm form_;
    std::vector<Matrix> kraus_;
    Matrix chi_;
    DensityMatrix choi_;
};

inline DensityMatrix apply_channel(const DensityMatrix& rho, const QuantumChannel& channel)
{
    return channel.apply(rho);
}

/// Choi state from the channel's native representation:
/// (1/d) sum_ij E(|i><j|) (x) |i><j|.
inline DensityMatrix choi_from_channel(const QuantumChannel& channel)
{
    Index const d = channel.dim();
    Matrix choi = Matrix::Zero(d * d, d * d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) {
            Matrix eij = Matrix::Zero(d, d);
            eij(i, j) = 1.0;
            choi += tensor(channel.apply_operator(eij, channel.form()), eij);
        }
    return DensityMatrix(hermitian_part(choi / static_cast<double>(d)));
}

// ---------------------------------------------------------------------------
// gates

/// Named gate matrices. Rotation gates RX/RZ take the angle `theta`.
inline Matrix gate_matrix(std::string_view name, double theta = 0.0)
{
    Complex const i(0.0, 1.0);
    double const r = 1.0 / std::sqrt(2.0);
    Matrix m;
    if (name == "I") {
        m = Matrix::Identity(2, 2);
    } else if (name == "X") {
        m = pauli_matrix(Pauli::X);
    } else if (name == "Y") {
        m = pauli_matrix(Pauli::Y);
    } else if (name == "Z") {
        m = pauli_matrix(Pauli::Z);
    } else if (name == "H") {
        m.resize(2, 2);
        m << r, r, r, -r;
    } else if (name == "S") {
        m.resize(2, 2);
        m << 1, 0, 0, i;
    } else if (name == "T") {
        m.resize(2, 2);
        m << 1, 0, 0, std::exp(i * (std::numbers::pi / 4.0));
    } else if (name == "RX") {
        m.resize(2, 2);
        m << std::cos(theta / 2), -i * std::sin(theta / 2), -i * std::sin(theta / 2), std::cos(theta / 2);
    } else if (name == "RZ") {
        m.resize(2, 2);
        m << std::exp(-i * (theta / 2)), 0, 0, std::exp(i * (theta / 2));
    } else if (name == "CNOT") {
        m = Matrix::Zero(4, 4);
        m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = 1.0;
    } else if (name == "SWAP") {
        m = Matrix::Zero(4, 4);
        m(0, 0) = m(1, 2) = m(2, 1) = m(3, 3) = 1.0;
    } else {
        throw QuantumError("unknown gate '" + std::string(name) + "'");
    }
    return m;
}

} // namespace qksa
