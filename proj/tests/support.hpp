#pragma once

// Test-only generators and oracles. Nothing here calls into the code paths
// it is used to check beyond the basic Matrix type.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qksa/quantum.hpp"
#include "qksa/random.hpp"

namespace qksa::testing {

inline Matrix ginibre(Index dim, RandomSource& rng)
{
    Matrix g(dim, dim);
    for (Index r = 0; r < dim; ++r)
        for (Index c = 0; c < dim; ++c)
            g(r, c) = Complex(rng.normal(), rng.normal());
    return g;
}

/// Haar-random unitary via QR of a Ginibre matrix with phase fix.
inline Matrix random_unitary(Index dim, RandomSource& rng)
{
    Eigen::HouseholderQR<Matrix> qr(ginibre(dim, rng));
    Matrix q = qr.householderQ();
    Matrix const r = qr.matrixQR();
    for (Index k = 0; k < dim; ++k) {
        Complex const diag = r(k, k);
        q.col(k) *= diag / std::abs(diag);
    }
    return q;
}

/// Random full-rank mixed state.
inline Matrix random_density(Index dim, RandomSource& rng)
{
    Matrix const g = ginibre(dim, rng);
    Matrix rho = g * g.adjoint();
    return rho / rho.trace();
}

/// Omega projector written out entry by entry: (1/d) sum_ij |ii><jj|.
inline Matrix omega_projector(Index d)
{
    Matrix out = Matrix::Zero(d * d, d * d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            out(i * d + i, j * d + j) = 1.0 / static_cast<double>(d);
    return out;
}

/// (A (x) I) Omega (A (x) I)^dagger by explicit Kronecker arithmetic.
inline Matrix conjugated_omega(const Matrix& a)
{
    Index const d = a.rows();
    Matrix lifted = Matrix::Zero(d * d, d * d);
    for (Index r = 0; r < d; ++r)
        for (Index c = 0; c < d; ++c)
            for (Index k = 0; k < d; ++k)
                lifted(r * d + k, c * d + k) = a(r, c);
    return lifted * omega_projector(d) * lifted.adjoint();
}

inline Matrix plus_state_matrix()
{
    Matrix m(2, 2);
    m << 0.5, 0.5, 0.5, 0.5;
    return m;
}

/// The single-qubit registry with concrete parameters for RX, RZ and DEPOL.
inline std::vector<std::string> registry_specs()
{
    return {"I", "X", "Y", "Z", "H", "S", "T", "RX(0.7)", "RZ(1.3)", "DEPOL(0.3)"};
}

inline double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    std::size_t const n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace qksa::testing
