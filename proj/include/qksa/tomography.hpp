#pragma once

// State and process tomography on a QuantumEnvironment.
//
// Every routine measures full-weight Pauli settings only; lower-weight
// correlators come from marginalizing the parity of the measured bits. A shot
// count of kExactShots replaces sampling by the exact outcome distribution.

#include <Eigen/Dense>
#include <bit>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qksa/config.hpp"
#include "qksa/environment.hpp"
#include "qksa/quantum.hpp"
#include "qksa/random.hpp"
#include "qksa/trace.hpp"

namespace qksa {

class TomographyError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline constexpr long kExactShots = 0;

enum class Method { qst, sqpt, eapt };

inline const char* to_string(Method m)
{
    switch (m) {
    case Method::qst: return "qst";
    case Method::sqpt: return "sqpt";
    case Method::eapt: return "eapt";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view text)
{
    if (text == "qst")
        return Method::qst;
    if (text == "sqpt")
        return Method::sqpt;
    if (text == "eapt")
        return Method::eapt;
    return std::nullopt;
}

/// A candidate hypothesis for the hidden process: which tomography routine
/// to run and with how many shots per setting.
struct QPTStrategy
{
    Method method = Method::sqpt;
    long shots = 100;

    std::string descriptor() const
    {
        return std::string(to_string(method)) + ":shots=" + (shots == kExactShots ? "exact" : std::to_string(shots));
    }

    static QPTStrategy parse(std::string_view text)
    {
        auto const colon = text.find(":shots=");
        if (colon == std::string_view::npos)
            throw TomographyError("strategy must look like 'sqpt:shots=100'");
        auto const method = parse_method(text.substr(0, colon));
        if (!method)
            throw TomographyError("unknown tomography method '" + std::string(text.substr(0, colon)) + "'");
        auto const count = text.substr(colon + 7);
        if (count == "exact")
            return {*method, kExactShots};
        auto const shots = parse_integer(count);
        if (!shots || *shots < 1)
            throw TomographyError("invalid shot count '" + std::string(count) + "'");
        return {*method, static_cast<long>(*shots)};
    }

    friend bool operator==(const QPTStrategy&, const QPTStrategy&) = default;
};

// ---------------------------------------------------------------------------
// settings

/// One measurement setting: a preparation (ignored by the entangled method)
/// and a full-weight basis.
struct Setting
{
    std::size_t prep_index = 0;
    PauliString basis;
};

struct ReconstructionBudget
{
    Method method = Method::qst;
    int n_qubits = 1;
    long shots_per_setting = kExactShots;
    std::vector<Setting> settings;

    std::size_t settings_count() const { return settings.size(); }
    long total_shots() const { return shots_per_setting * static_cast<long>(settings.size()); }
};

inline std::size_t expected_settings(Method method, int n_qubits)
{
    switch (method) {
    case Method::qst: return int_pow(3, n_qubits);
    case Method::sqpt: return int_pow(18, n_qubits);
    case Method::eapt: return int_pow(9, n_qubits);
    }
    return 0;
}

/// Settings in execution order. `prep_index` selects the input state for
/// state tomography.
inline ReconstructionBudget make_budget(Method method, int n_qubits, long shots, std::size_t prep_index = 0)
{
    ReconstructionBudget budget{method, n_qubits, shots, {}};
    switch (method) {
    case Method::qst:
        for (auto& basis : full_weight_bases(n_qubits))
            budget.settings.push_back({prep_index, std::move(basis)});
        break;
    case Method::sqpt: {
        auto const bases = full_weight_bases(n_qubits);
        for (std::size_t p = 0; p < int_pow(6, n_qubits); ++p)
            for (const auto& basis : bases)
                budget.settings.push_back({p, basis});
        break;
    }
    case Method::eapt:
        for (auto& basis : full_weight_bases(2 * n_qubits))
            budget.settings.push_back({0, std::move(basis)});
        break;
    }
    return budget;
}

// ---------------------------------------------------------------------------
// data collection

/// Observed outcome frequencies of one setting.
struct SettingRecord
{
    Setting setting;
    std::vector<double> frequencies;
    long shots = kExactShots;
};

inline SettingRecord collect_setting(QuantumEnvironment& env, Method method, const Setting& setting, long shots,
                                     RandomSource& rng, ExecutionTrace* trace = nullptr)
{
    if (shots < 0)
        throw TomographyError("shot count must be positive");
    bool const entangled = method == Method::eapt;
    SettingRecord record{setting, {}, shots};
    if (shots == kExactShots) {
        record.frequencies = entangled ? env.entangled_distribution(setting.basis)
                                       : env.distribution(QuantumAction{setting.prep_index, setting.basis});
        if (trace)
            trace->count_measurements();
        return record;
    }
    std::size_t const outcomes = std::size_t{1} << setting.basis.n_qubits();
    record.frequencies.assign(outcomes, 0.0);
    std::size_t const action = entangled ? 0 : env.action_index(QuantumAction{setting.prep_index, setting.basis});
    for (long s = 0; s < shots; ++s) {
        Percept const bits = entangled ? env.step_entangled(setting.basis, rng) : env.step(action, rng);
        record.frequencies[outcome_index(bits)] += 1.0;
    }
    for (double& f : record.frequencies)
        f /= static_cast<double>(shots);
    if (trace) {
        trace->count_measurements(static_cast<std::uint64_t>(shots));
        trace->note_cells(outcomes);
    }
    return record;
}

/// Parity-weighted mean of the frequencies over the qubits where `observable`
/// is not the identity.
inline double parity_expectation(const std::vector<double>& frequencies, const PauliString& observable)
{
    int const n = observable.n_qubits();
    std::size_t mask = 0;
    for (int k = 0; k < n; ++k)
        if (observable[k] != Pauli::I)
            mask |= std::size_t{1} << (n - 1 - k);
    double value = 0.0;
    for (std::size_t b = 0; b < frequencies.size(); ++b)
        value += (std::popcount(b & mask) % 2 == 0 ? 1.0 : -1.0) * frequencies[b];
    return value;
}

/// Estimated Pauli expectations keyed by (prep, observable).
class ExpectationTable
{
public:
    struct Entry
    {
        double value = 0.0;
        long shots_used = 0;
    };

    void add(std::size_t prep_index, const PauliString& observable, double value, long shots)
    {
        auto& acc = acc_[{prep_index, observable}];
        double const weight = shots == kExactShots ? 1.0 : static_cast<double>(shots);
        acc.sum += weight * value;
        acc.weight += weight;
        acc.shots += shots;
    }

    /// Every non-identity observable the record's basis determines.
    void add_record(const SettingRecord& record)
    {
        const auto& basis = record.setting.basis;
        int const n = basis.n_qubits();
        std::size_t const subsets = std::size_t{1} << n;
        for (std::size_t keep = 1; keep < subsets; ++keep) {
            std::vector<Pauli> letters(static_cast<std::size_t>(n), Pauli::I);
            for (int k = 0; k < n; ++k)
                if (keep & (std::size_t{1} << (n - 1 - k)))
                    letters[static_cast<std::size_t>(k)] = basis[k];
            PauliString const observable(std::move(letters));
            add(record.setting.prep_index, observable, parity_expectation(record.frequencies, observable), record.shots);
        }
    }

    std::optional<Entry> find(std::size_t prep_index, const PauliString& observable) const
    {
        auto it = acc_.find({prep_index, observable});
        if (it == acc_.end())
            return std::nullopt;
        return Entry{it->second.sum / it->second.weight, it->second.shots};
    }

    /// All expectations of one preparation; identity included at 1.
    std::map<PauliString, double> for_prep(std::size_t prep_index, int n_qubits) const
    {
        std::map<PauliString, double> out;
        for (const auto& p : all_pauli_strings(n_qubits)) {
            if (p.is_identity())
                out.emplace(p, 1.0);
            else if (auto e = find(prep_index, p))
                out.emplace(p, e->value);
        }
        return out;
    }

    std::size_t size() const { return acc_.size(); }

private:
    struct Accumulator
    {
        double sum = 0.0;
        double weight = 0.0;
        long shots = 0;
    };
    std::map<std::pair<std::size_t, PauliString>, Accumulator> acc_;
};

inline ExpectationTable tabulate(const std::vector<SettingRecord>& records)
{
    ExpectationTable table;
    for (const auto& r : records)
        table.add_record(r);
    return table;
}

/// Mean parity of `basis`; identity letters are measured in Z and ignored.
inline double estimate_expectation(QuantumEnvironment& env, std::size_t prep_index, const PauliString& basis,
                                   long shots, RandomSource& rng, ExecutionTrace* trace = nullptr)
{
    if (basis.n_qubits() != env.n_qubits())
        throw TomographyError("basis '" + basis.str() + "' does not match the environment");
    std::vector<Pauli> letters = basis.letters();
    for (Pauli& p : letters)
        if (p == Pauli::I)
            p = Pauli::Z;
    auto const record = collect_setting(env, Method::qst, {prep_index, PauliString(std::move(letters))}, shots, rng, trace);
    return parity_expectation(record.frequencies, basis);
}

// ---------------------------------------------------------------------------
// reconstruction

/// rho = sum_P E_P P / 2^n, PSD-projected when needed.
inline DensityMatrix qst(const std::map<PauliString, double>& expectations, int n_qubits,
                         ExecutionTrace* trace = nullptr)
{
    Index const d = dim_for(n_qubits);
    Matrix rho = Matrix::Zero(d, d);
    for (const auto& p : all_pauli_strings(n_qubits)) {
        auto it = expectations.find(p);
        if (p.is_identity() && it == expectations.end()) {
            rho += Matrix::Identity(d, d);
            continue;
        }
        if (it == expectations.end())
            throw TomographyError("missing expectation for Pauli term " + p.str());
        if (it->first.n_qubits() != n_qubits)
            throw TomographyError("Pauli term " + it->first.str() + " has the wrong qubit count");
        if (p.is_identity() && std::abs(it->second - 1.0) > kTolerance)
            throw TomographyError("identity expectation must be 1");
        rho += it->second * p.matrix();
    }
    if (expectations.size() > static_cast<std::size_t>(d * d))
        throw TomographyError("expectations include terms for the wrong qubit count");
    rho = hermitian_part(rho / static_cast<double>(d));
    if (min_eigenvalue(rho) < -kPsdTolerance)
        rho = project_psd(rho);
    if (trace) {
        trace->count_matrix_ops(static_cast<std::uint64_t>(d * d) + 1);
        trace->note_cells(static_cast<std::uint64_t>(d * d));
    }
    return DensityMatrix(rho);
}

namespace detail {

inline Matrix inverse_sqrt_hermitian(const Matrix& m)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hermitian_part(m));
    Eigen::VectorXd vals = eig.eigenvalues();
    for (Index k = 0; k < vals.size(); ++k)
        vals(k) = 1.0 / std::sqrt(std::max(vals(k), 1e-12));
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().adjoint();
}

} // namespace detail

/// Turn a raw normalized Choi estimate into a valid channel: clip negative
/// eigenvalues, then restore trace preservation by a congruence on the
/// reference factor.
inline QuantumChannel finalize_choi(const Matrix& raw, int n_qubits, ExecutionTrace* trace = nullptr)
{
    Index const d = dim_for(n_qubits);
    Matrix choi = hermitian_part(raw);
    if (min_eigenvalue(choi) < -kPsdTolerance)
        choi = project_psd(choi);
    Matrix const reduced = partial_trace_first(static_cast<double>(d) * choi, d, d);
    if (max_abs(reduced - Matrix::Identity(d, d)) > 1e-12) {
        Matrix const lift = tensor(Matrix::Identity(d, d), detail::inverse_sqrt_hermitian(reduced));
        choi = hermitian_part(lift * choi * lift);
    }
    if (trace) {
        trace->count_matrix_ops(4);
        trace->note_cells(static_cast<std::uint64_t>(choi.size()));
    }
    return QuantumChannel::from_choi(DensityMatrix(choi));
}

/// Least-squares chi from the table tr[M sum chi_mk P_m rho P_k] = E_{rho,M},
/// one equation per (prep, M) with M over all 4^n Paulis.
inline QuantumChannel sqpt_from_table(const ExpectationTable& table, int n_qubits, ExecutionTrace* trace = nullptr)
{
    if (n_qubits > 2)
        throw TomographyError("process tomography is limited to two qubits");
    auto const paulis = all_pauli_strings(n_qubits);
    std::vector<Matrix> mats;
    for (const auto& p : paulis)
        mats.push_back(p.matrix());
    Index const terms = static_cast<Index>(paulis.size());
    std::size_t const preps = int_pow(6, n_qubits);
    Index const rows = static_cast<Index>(preps) * terms;

    Matrix a(rows, terms * terms);
    Vector b(rows);
    for (std::size_t prep = 0; prep < preps; ++prep) {
        auto const expectations = table.for_prep(prep, n_qubits);
        Matrix const rho = pauli_eigenstate(prep, n_qubits).matrix();
        Index const base = static_cast<Index>(prep) * terms;
        for (Index m = 0; m < terms; ++m) {
            Matrix const left = mats[static_cast<std::size_t>(m)] * rho;
            for (Index k = 0; k < terms; ++k) {
                Matrix const sandwich = left * mats[static_cast<std::size_t>(k)];
                for (Index r = 0; r < terms; ++r)
                    a(base + r, m * terms + k) = (mats[static_cast<std::size_t>(r)] * sandwich).trace();
            }
        }
        for (Index r = 0; r < terms; ++r) {
            auto it = expectations.find(paulis[static_cast<std::size_t>(r)]);
            if (it == expectations.end())
                throw TomographyError("no data for " + prep_label(prep, n_qubits) + " / " +
                                      paulis[static_cast<std::size_t>(r)].str());
            b(base + r) = it->second;
        }
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> solver(a);
    if (solver.rank() < terms * terms)
        throw TomographyError("linear system is rank deficient; input states are not informationally complete");
    Vector const x = solver.solve(b);
    Matrix chi(terms, terms);
    for (Index m = 0; m < terms; ++m)
        for (Index k = 0; k < terms; ++k)
            chi(m, k) = x(m * terms + k);
    if (trace) {
        auto const p = static_cast<std::uint64_t>(preps);
        auto const t = static_cast<std::uint64_t>(terms);
        trace->count_matrix_ops(p * (t + t * t + t * t * t) + 1);
        trace->note_cells(static_cast<std::uint64_t>(a.size()));
    }
    return finalize_choi(chi_to_choi_matrix(hermitian_part(chi), paulis), n_qubits, trace);
}

/// Choi state of the channel by state tomography on 2n qubits.
inline QuantumChannel eapt_from_table(const ExpectationTable& table, int n_qubits, ExecutionTrace* trace = nullptr)
{
    DensityMatrix const choi = qst(table.for_prep(0, 2 * n_qubits), 2 * n_qubits, trace);
    return finalize_choi(choi.matrix(), n_qubits, trace);
}

inline std::vector<SettingRecord> collect_all(QuantumEnvironment& env, const ReconstructionBudget& budget,
                                              RandomSource& rng, ExecutionTrace* trace = nullptr)
{
    if (budget.method == Method::eapt && !env.entangled_mode())
        throw TomographyError("entanglement-assisted tomography needs an environment in entangled_mode");
    std::vector<SettingRecord> records;
    records.reserve(budget.settings.size());
    for (const auto& s : budget.settings)
        records.push_back(collect_setting(env, budget.method, s, budget.shots_per_setting, rng, trace));
    return records;
}

/// Process reconstruction from a full pass of records.
inline QuantumChannel reconstruct_process(Method method, int n_qubits, const std::vector<SettingRecord>& records,
                                          ExecutionTrace* trace = nullptr)
{
    auto const table = tabulate(records);
    switch (method) {
    case Method::sqpt: return sqpt_from_table(table, n_qubits, trace);
    case Method::eapt: return eapt_from_table(table, n_qubits, trace);
    case Method::qst: break;
    }
    throw TomographyError("state tomography does not reconstruct a process");
}

struct StateReconstruction
{
    DensityMatrix state;
    ReconstructionBudget budget;
};

struct ProcessReconstruction
{
    QuantumChannel channel;
    ReconstructionBudget budget;
};

/// Output state of the environment for one preparation.
inline StateReconstruction qst(QuantumEnvironment& env, std::size_t prep_index, long shots, RandomSource& rng,
                               ExecutionTrace* trace = nullptr)
{
    auto budget = make_budget(Method::qst, env.n_qubits(), shots, prep_index);
    auto const table = tabulate(collect_all(env, budget, rng, trace));
    return {qst(table.for_prep(prep_index, env.n_qubits()), env.n_qubits(), trace), std::move(budget)};
}

inline ProcessReconstruction sqpt(QuantumEnvironment& env, long shots, RandomSource& rng,
                                  ExecutionTrace* trace = nullptr)
{
    auto budget = make_budget(Method::sqpt, env.n_qubits(), shots);
    auto const records = collect_all(env, budget, rng, trace);
    return {reconstruct_process(Method::sqpt, env.n_qubits(), records, trace), std::move(budget)};
}

inline ProcessReconstruction eapt(QuantumEnvironment& env, long shots, RandomSource& rng,
                                  ExecutionTrace* trace = nullptr)
{
    auto budget = make_budget(Method::eapt, env.n_qubits(), shots);
    auto const records = collect_all(env, budget, rng, trace);
    return {reconstruct_process(Method::eapt, env.n_qubits(), records, trace), std::move(budget)};
}

// ---------------------------------------------------------------------------
// prediction

struct Prediction
{
    std::vector<double> probabilities;
    std::size_t point = 0;  ///< most likely outcome, lowest index on ties
    Percept bits;
};

inline Prediction predict(const QuantumChannel& model, const QuantumAction& action)
{
    if (action.basis.n_qubits() != model.n_qubits())
        throw TomographyError("action acts on " + std::to_string(action.basis.n_qubits()) +
                              " qubits but the model on " + std::to_string(model.n_qubits()));
    Prediction out;
    out.probabilities = outcome_probabilities(model.apply(pauli_eigenstate(action.prep_index, model.n_qubits())),
                                              action.basis);
    for (std::size_t b = 1; b < out.probabilities.size(); ++b)
        if (out.probabilities[b] > out.probabilities[out.point] + 1e-12)
            out.point = b;
    out.bits = outcome_bits(out.point, model.n_qubits());
    return out;
}

// ---------------------------------------------------------------------------
// report

struct TomographyReport
{
    Method method = Method::qst;
    int n_qubits = 1;
    std::size_t settings_count = 0;
    long shots_per_setting = kExactShots;
    Matrix reconstructed;  ///< density matrix (qst) or normalized Choi matrix
    std::optional<double> trace_distance;

    std::string format() const
    {
        std::string out;
        out += "method = " + std::string(to_string(method)) + "\n";
        out += "n_qubits = " + std::to_string(n_qubits) + "\n";
        out += "settings_count = " + std::to_string(settings_count) + "\n";
        out += "shots_per_setting = " +
               (shots_per_setting == kExactShots ? std::string("exact") : std::to_string(shots_per_setting)) + "\n";
        if (trace_distance)
            out += "trace_distance = " + format_double17(*trace_distance) + "\n";
        out += "matrix_dim = " + std::to_string(reconstructed.rows()) + "\n";
        out += "matrix = " + format_matrix(reconstructed) + "\n";
        return out;
    }
};

} // namespace qksa
