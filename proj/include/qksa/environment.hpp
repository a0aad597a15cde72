#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qksa/config.hpp"
#include "qksa/quantum.hpp"
#include "qksa/random.hpp"

namespace qksa {

using Percept = std::string;

class EnvironmentError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline std::size_t int_pow(std::size_t base, int exponent)
{
    std::size_t out = 1;
    for (int k = 0; k < exponent; ++k)
        out *= base;
    return out;
}

/// Turn-based action/percept interface. Percepts are outcome bitstrings of
/// fixed width; action and percept spaces are finite and stationary.
class Environment
{
public:
    virtual ~Environment() = default;

    virtual std::size_t action_count() const = 0;
    virtual int percept_bits() const = 0;
    std::size_t percept_count() const { return std::size_t{1} << percept_bits(); }

    virtual std::string encode_action(std::size_t action) const = 0;
    virtual Percept step(std::size_t action, RandomSource& rng) = 0;

    /// Fresh instance with the same configuration and reset internal state.
    virtual std::unique_ptr<Environment> clone() const = 0;
};

// ---------------------------------------------------------------------------
// percept log

struct PerceptRecord
{
    long long step = 0;
    std::string action;
    Percept outcome;
};

class PerceptLog
{
public:
    void record(std::string action, Percept outcome)
    {
        records_.push_back({static_cast<long long>(records_.size()), std::move(action), std::move(outcome)});
    }

    const std::vector<PerceptRecord>& records() const { return records_; }

    void write_csv(std::ostream& out) const
    {
        out << "step,action,outcome\n";
        for (const auto& r : records_)
            out << r.step << ',' << r.action << ',' << r.outcome << '\n';
    }

private:
    std::vector<PerceptRecord> records_;
};

// ---------------------------------------------------------------------------
// Pauli eigenstate preparations

/// Per-qubit preparation order, the digits of a base-6 prep index.
inline constexpr std::string_view kPrepLabels[6] = {"Z+", "Z-", "X+", "X-", "Y+", "Y-"};

inline Vector single_qubit_eigenvector(std::size_t which)
{
    double const r = 1.0 / std::sqrt(2.0);
    Complex const i(0.0, 1.0);
    Vector v(2);
    switch (which) {
    case 0: v << 1, 0; break;
    case 1: v << 0, 1; break;
    case 2: v << r, r; break;
    case 3: v << r, -r; break;
    case 4: v << r, i * r; break;
    case 5: v << r, -i * r; break;
    default: throw EnvironmentError("eigenstate index out of range");
    }
    return v;
}

/// Digits of a prep index, qubit 0 first (most significant).
inline std::vector<std::size_t> prep_digits(std::size_t prep_index, int n_qubits)
{
    std::vector<std::size_t> digits(static_cast<std::size_t>(n_qubits));
    for (int k = n_qubits - 1; k >= 0; --k) {
        digits[static_cast<std::size_t>(k)] = prep_index % 6;
        prep_index /= 6;
    }
    return digits;
}

inline DensityMatrix pauli_eigenstate(std::size_t prep_index, int n_qubits)
{
    if (prep_index >= int_pow(6, n_qubits))
        throw EnvironmentError("preparation index " + std::to_string(prep_index) + " out of range");
    Vector psi = Vector::Ones(1);
    for (std::size_t digit : prep_digits(prep_index, n_qubits))
        psi = tensor(psi, single_qubit_eigenvector(digit));
    return DensityMatrix::pure(psi);
}

inline std::string prep_label(std::size_t prep_index, int n_qubits)
{
    std::string out;
    for (std::size_t digit : prep_digits(prep_index, n_qubits))
        out += kPrepLabels[digit];
    return out;
}

struct QuantumAction
{
    std::size_t prep_index = 0;
    PauliString basis;

    /// e.g. "Z+X-:ZX"
    std::string encode() const { return prep_label(prep_index, basis.n_qubits()) + ":" + basis.str(); }

    friend bool operator==(const QuantumAction&, const QuantumAction&) = default;
};

// ---------------------------------------------------------------------------
// configuration

struct ChannelSpec
{
    std::optional<std::string> gate;  ///< registry name, e.g. "H" or "RX(0.5)"
    std::vector<Matrix> kraus;        ///< used when gate is empty
};

struct QuantumEnvConfig
{
    int n_qubits = 1;
    ChannelSpec channel;
    bool entangled_mode = false;
    std::uint64_t seed = 0;
};

/// The ten single-qubit registry entries, in documentation order. Parametric
/// entries are listed by bare name.
inline const std::vector<std::string>& single_qubit_registry()
{
    static const std::vector<std::string> names = {"I", "X", "Y", "Z", "H", "S", "T", "RX", "RZ", "DEPOL"};
    return names;
}

/// Resolve a registry spec such as "H", "RX(0.5)", "DEPOL(0.25)", "CNOT".
/// Single-qubit gates on n > 1 qubits act as their n-fold tensor power.
inline QuantumChannel make_registry_channel(std::string_view spec, int n_qubits)
{
    spec = trim(spec);
    std::string name(spec);
    std::optional<double> param;
    if (auto const open = spec.find('('); open != std::string_view::npos) {
        if (spec.back() != ')')
            throw EnvironmentError("malformed gate spec '" + std::string(spec) + "'");
        name = std::string(trim(spec.substr(0, open)));
        param = parse_double(spec.substr(open + 1, spec.size() - open - 2));
        if (!param)
            throw EnvironmentError("bad gate parameter in '" + std::string(spec) + "'");
    }
    bool const parametric = name == "RX" || name == "RZ" || name == "DEPOL";
    if (parametric != param.has_value())
        throw EnvironmentError(parametric ? "gate '" + name + "' needs a parameter"
                                          : "gate '" + name + "' takes no parameter");
    if (n_qubits < 1 || n_qubits > kMaxQubits)
        throw EnvironmentError("n_qubits must be in [1, " + std::to_string(kMaxQubits) + "]");
    if (name == "DEPOL")
        return QuantumChannel::depolarizing(n_qubits, *param);

    Matrix const u = gate_matrix(name, param.value_or(0.0));
    if (u.rows() == 2)
        return QuantumChannel::unitary(tensor_power(u, n_qubits));
    if (u.rows() != dim_for(n_qubits))
        throw EnvironmentError("gate '" + name + "' needs " + std::to_string(qubit_count(u.rows())) + " qubits");
    return QuantumChannel::unitary(u);
}

inline QuantumChannel resolve_channel(const QuantumEnvConfig& config)
{
    if (config.channel.gate)
        return make_registry_channel(*config.channel.gate, config.n_qubits);
    if (config.channel.kraus.empty())
        throw EnvironmentError("environment has no channel");
    if (config.channel.kraus.front().rows() != dim_for(config.n_qubits))
        throw EnvironmentError("Kraus operator dimension does not match n_qubits");
    return QuantumChannel::from_kraus(config.channel.kraus);
}

/// Kraus list text: operators separated by ';', each a row-major list of
/// interleaved real/imaginary parts.
inline std::vector<Matrix> parse_kraus_list(std::string_view text)
{
    std::vector<Matrix> ops;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto const end = text.find(';', pos);
        std::string_view chunk = text.substr(pos, end == std::string_view::npos ? text.npos : end - pos);
        pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
        std::vector<double> numbers;
        std::size_t p = 0;
        while (p < chunk.size()) {
            while (p < chunk.size() && (chunk[p] == ' ' || chunk[p] == ',' || chunk[p] == '\t'))
                ++p;
            std::size_t q = p;
            while (q < chunk.size() && chunk[q] != ' ' && chunk[q] != ',' && chunk[q] != '\t')
                ++q;
            if (q > p) {
                auto v = parse_double(chunk.substr(p, q - p));
                if (!v)
                    throw EnvironmentError("bad number '" + std::string(chunk.substr(p, q - p)) +
                                           "' in Kraus list");
                numbers.push_back(*v);
            }
            p = q;
        }
        if (numbers.empty())
            throw EnvironmentError("empty Kraus operator");
        auto const d = static_cast<Index>(std::llround(std::sqrt(numbers.size() / 2.0)));
        if (static_cast<std::size_t>(2 * d * d) != numbers.size())
            throw EnvironmentError("Kraus operator needs 2*d*d numbers, got " + std::to_string(numbers.size()));
        Matrix a(d, d);
        for (Index r = 0; r < d; ++r)
            for (Index c = 0; c < d; ++c) {
                auto const k = static_cast<std::size_t>(2 * (r * d + c));
                a(r, c) = Complex(numbers[k], numbers[k + 1]);
            }
        ops.push_back(std::move(a));
    }
    return ops;
}

inline std::string format_matrix(const Matrix& m)
{
    std::string out;
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) {
            if (!out.empty())
                out += ' ';
            out += format_double17(m(r, c).real()) + ' ' + format_double17(m(r, c).imag());
        }
    return out;
}

inline std::string format_kraus_list(const std::vector<Matrix>& ops)
{
    std::string out;
    for (const auto& a : ops) {
        if (!out.empty())
            out += " ; ";
        out += format_matrix(a);
    }
    return out;
}

/// Environment config schema:
///   n_qubits        integer in [1, 3]
///   channel.gate    registry spec (exactly one of gate / kraus)
///   channel.kraus   Kraus list, see parse_kraus_list
///   entangled_mode  true | false (default false)
///   seed            unsigned integer (default 0)
inline QuantumEnvConfig parse_env_config(const KeyValueFile& file)
{
    file.require_known({"n_qubits", "channel.gate", "channel.kraus", "entangled_mode", "seed"});
    QuantumEnvConfig config;
    config.n_qubits = static_cast<int>(file.get_integer("n_qubits"));
    if (config.n_qubits < 1 || config.n_qubits > kMaxQubits)
        throw ConfigError("n_qubits must be in [1, 3]", file.source(), file.require("n_qubits").line);
    bool const has_gate = file.has("channel.gate");
    bool const has_kraus = file.has("channel.kraus");
    if (has_gate == has_kraus)
        throw ConfigError("exactly one of channel.gate / channel.kraus is required", file.source());
    try {
        if (has_gate)
            config.channel.gate = file.get_string("channel.gate");
        else
            config.channel.kraus = parse_kraus_list(file.get_string("channel.kraus"));
    } catch (const EnvironmentError& e) {
        auto const key = has_gate ? "channel.gate" : "channel.kraus";
        throw ConfigError(e.what(), file.source(), file.require(key).line);
    }
    if (file.has("entangled_mode"))
        config.entangled_mode = file.get_bool("entangled_mode");
    if (file.has("seed")) {
        auto const seed = file.get_integer("seed");
        if (seed < 0)
            throw ConfigError("seed must be non-negative", file.source(), file.require("seed").line);
        config.seed = static_cast<std::uint64_t>(seed);
    }
    return config;
}

inline QuantumEnvConfig load_env_config(const std::filesystem::path& path)
{
    return parse_env_config(KeyValueFile::load(path));
}

inline std::string serialize_env_config(const QuantumEnvConfig& config)
{
    std::string out = "n_qubits = " + std::to_string(config.n_qubits) + "\n";
    if (config.channel.gate)
        out += "channel.gate = " + *config.channel.gate + "\n";
    else
        out += "channel.kraus = " + format_kraus_list(config.channel.kraus) + "\n";
    out += std::string("entangled_mode = ") + (config.entangled_mode ? "true" : "false") + "\n";
    out += "seed = " + std::to_string(config.seed) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// quantum black-box environment

/// Hides a channel; answers prepare-evolve-measure actions with outcomes.
/// Action index = prep_index * 3^n + basis index (full_weight_bases order).
class QuantumEnvironment : public Environment
{
public:
    explicit QuantumEnvironment(const QuantumEnvConfig& config)
        : QuantumEnvironment(resolve_channel(config), config.entangled_mode)
    {
        if (channel_.n_qubits() != config.n_qubits)
            throw EnvironmentError("channel acts on the wrong number of qubits");
    }

    QuantumEnvironment(QuantumChannel channel, bool entangled_mode)
        : channel_(std::move(channel)), entangled_mode_(entangled_mode), bases_(full_weight_bases(channel_.n_qubits()))
    {
        cache_.resize(action_count());
    }

    int n_qubits() const { return channel_.n_qubits(); }
    bool entangled_mode() const { return entangled_mode_; }
    const QuantumChannel& channel() const { return channel_; }

    std::size_t action_count() const override { return int_pow(6, n_qubits()) * bases_.size(); }
    int percept_bits() const override { return n_qubits(); }

    QuantumAction action(std::size_t index) const
    {
        if (index >= action_count())
            throw EnvironmentError("action index " + std::to_string(index) + " out of range");
        return {index / bases_.size(), bases_[index % bases_.size()]};
    }

    std::size_t action_index(const QuantumAction& a) const
    {
        validate(a);
        std::size_t basis_index = 0;
        for (Pauli p : a.basis.letters())
            basis_index = basis_index * 3 + (p == Pauli::Z ? 0 : p == Pauli::X ? 1 : 2);
        return a.prep_index * bases_.size() + basis_index;
    }

    std::string encode_action(std::size_t action_index) const override { return action(action_index).encode(); }

    Percept step(std::size_t index, RandomSource& rng) override
    {
        auto const& probs = distribution(index);
        Percept out = outcome_bits(sample_index(probs, rng), n_qubits());
        if (log_)
            log_->record(encode_action(index), out);
        return out;
    }

    Percept step(const QuantumAction& a, RandomSource& rng) { return step(action_index(a), rng); }

    /// Prepare Omega on 2n qubits, apply the channel to the first n and
    /// measure all 2n qubits in `basis`.
    Percept step_entangled(const PauliString& basis, RandomSource& rng)
    {
        auto const& probs = entangled_distribution(basis);
        Percept out = outcome_bits(sample_index(probs, rng), 2 * n_qubits());
        if (log_)
            log_->record("Omega:" + basis.str(), out);
        return out;
    }

    /// Exact outcome distribution of an action (used by exact-mode tomography
    /// and tests; an agent only ever sees sampled percepts).
    const std::vector<double>& distribution(std::size_t index)
    {
        auto const a = action(index);
        auto& slot = cache_[index];
        if (!slot) {
            slot = outcome_probabilities(channel_.apply(pauli_eigenstate(a.prep_index, n_qubits())), a.basis);
        }
        return *slot;
    }

    const std::vector<double>& distribution(const QuantumAction& a) { return distribution(action_index(a)); }

    const std::vector<double>& entangled_distribution(const PauliString& basis)
    {
        if (!entangled_mode_)
            throw EnvironmentError("environment was not created with entangled_mode");
        if (basis.n_qubits() != 2 * n_qubits())
            throw EnvironmentError("entangled measurement needs a " + std::to_string(2 * n_qubits()) +
                                   "-qubit basis");
        auto it = entangled_cache_.find(basis.index());
        if (it == entangled_cache_.end()) {
            Index const d = channel_.dim();
            Matrix const omega = DensityMatrix::pure(omega_state(n_qubits())).matrix();
            Matrix state = Matrix::Zero(d * d, d * d);
            for (const Matrix& a : channel_.kraus()) {
                Matrix const lifted = tensor(a, Matrix::Identity(d, d));
                state += lifted * omega * lifted.adjoint();
            }
            auto probs = outcome_probabilities(DensityMatrix(hermitian_part(state)), basis);
            it = entangled_cache_.emplace(basis.index(), std::move(probs)).first;
        }
        return it->second;
    }

    /// Replace the hidden channel mid-run (death-trigger tests only).
    void swap_channel(QuantumChannel channel)
    {
        if (channel.n_qubits() != n_qubits())
            throw EnvironmentError("replacement channel acts on the wrong number of qubits");
        channel_ = std::move(channel);
        cache_.assign(action_count(), std::nullopt);
        entangled_cache_.clear();
    }

    void attach_log(PerceptLog* log) { log_ = log; }

    std::unique_ptr<Environment> clone() const override { return clone_quantum(); }

    std::unique_ptr<QuantumEnvironment> clone_quantum() const
    {
        auto copy = std::make_unique<QuantumEnvironment>(channel_, entangled_mode_);
        return copy;
    }

private:
    void validate(const QuantumAction& a) const
    {
        if (a.prep_index >= int_pow(6, n_qubits()))
            throw EnvironmentError("preparation index " + std::to_string(a.prep_index) + " out of range");
        if (a.basis.n_qubits() != n_qubits())
            throw EnvironmentError("basis '" + a.basis.str() + "' does not match " +
                                   std::to_string(n_qubits()) + " qubits");
        if (a.basis.has_identity())
            throw EnvironmentError("basis '" + a.basis.str() + "' leaves a qubit unmeasured");
    }

    QuantumChannel channel_;
    bool entangled_mode_;
    std::vector<PauliString> bases_;
    std::vector<std::optional<std::vector<double>>> cache_;
    std::map<std::size_t, std::vector<double>> entangled_cache_;
    PerceptLog* log_ = nullptr;
};

// ---------------------------------------------------------------------------
// deterministic toy environment

/// Single no-op action; percepts cycle through a fixed bit pattern.
class ToyPatternEnvironment : public Environment
{
public:
    explicit ToyPatternEnvironment(std::string pattern) : pattern_(std::move(pattern))
    {
        if (pattern_.empty())
            throw EnvironmentError("pattern must be non-empty");
        for (char c : pattern_)
            if (c != '0' && c != '1')
                throw EnvironmentError("pattern must be a bitstring");
    }

    std::size_t action_count() const override { return 1; }
    int percept_bits() const override { return 1; }
    std::string encode_action(std::size_t) const override { return "noop"; }

    Percept step(std::size_t action, RandomSource&) override
    {
        if (action != 0)
            throw EnvironmentError("toy environment has a single action");
        Percept out(1, pattern_[position_ % pattern_.size()]);
        ++position_;
        return out;
    }

    std::unique_ptr<Environment> clone() const override { return std::make_unique<ToyPatternEnvironment>(pattern_); }

private:
    std::string pattern_;
    std::size_t position_ = 0;
};

} // namespace qksa
