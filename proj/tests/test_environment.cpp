#include "qksa/environment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

using namespace qksa;

namespace {

QuantumEnvironment gate_env(std::string gate, int n = 1, bool entangled = false)
{
    QuantumEnvConfig cfg;
    cfg.n_qubits = n;
    cfg.channel.gate = std::move(gate);
    cfg.entangled_mode = entangled;
    return QuantumEnvironment(cfg);
}

QuantumAction act(std::size_t prep, const char* basis) { return {prep, PauliString::parse(basis)}; }

std::map<std::string, int> tally(QuantumEnvironment& env, const QuantumAction& a, int shots, RandomSource& rng)
{
    std::map<std::string, int> counts;
    for (int k = 0; k < shots; ++k)
        ++counts[env.step(a, rng)];
    return counts;
}

} // namespace

TEST(prep, eigenstate_order_and_labels)
{
    EXPECT_TRUE(pauli_eigenstate(0, 1).approx_equal(DensityMatrix::basis_state("0")));
    EXPECT_TRUE(pauli_eigenstate(1, 1).approx_equal(DensityMatrix::basis_state("1")));
    for (std::size_t k = 0; k < 6; ++k) {
        auto const rho = pauli_eigenstate(k, 1);
        Pauli const axis = k < 2 ? Pauli::Z : k < 4 ? Pauli::X : Pauli::Y;
        double const sign = k % 2 == 0 ? 1.0 : -1.0;
        EXPECT_NEAR(expectation(rho, PauliString({axis})), sign, 1e-12) << k;
    }
    // base 6, qubit 0 most significant: index 6*2 + 1 = X+ on qubit 0, Z- on qubit 1
    EXPECT_EQ(prep_label(13, 2), "X+Z-");
    EXPECT_TRUE(pauli_eigenstate(13, 2).approx_equal(
        DensityMatrix(tensor(pauli_eigenstate(2, 1).matrix(), pauli_eigenstate(1, 1).matrix())), 1e-12));
    EXPECT_THROW(pauli_eigenstate(36, 2), EnvironmentError);
}

TEST(quantum_env, action_indexing)
{
    auto env = gate_env("I", 2);
    EXPECT_EQ(env.action_count(), 36u * 9u);
    EXPECT_EQ(env.percept_count(), 4u);
    for (std::size_t k = 0; k < env.action_count(); ++k)
        EXPECT_EQ(env.action_index(env.action(k)), k);
    EXPECT_EQ(env.encode_action(0), "Z+Z+:ZZ");
    EXPECT_EQ(gate_env("I").encode_action(5), "Z-:Y");
}

TEST(quantum_env, step_examples)
{
    RandomSource rng(7);
    auto id = gate_env("I");
    auto x = gate_env("X");
    for (int k = 0; k < 100; ++k) {
        EXPECT_EQ(id.step(act(0, "Z"), rng), "0");
        EXPECT_EQ(x.step(act(0, "Z"), rng), "1");
    }
    auto h = gate_env("H");
    auto const counts = tally(h, act(0, "Z"), 10000, rng);
    EXPECT_NEAR(counts.at("0") / 1e4, 0.5, 0.02);
    EXPECT_NEAR(counts.at("1") / 1e4, 0.5, 0.02);
}

TEST(quantum_env, step_errors)
{
    RandomSource rng(1);
    auto env = gate_env("I");
    EXPECT_THROW(env.step(18, rng), EnvironmentError);
    EXPECT_THROW(env.step(act(6, "Z"), rng), EnvironmentError);
    EXPECT_THROW(env.step(act(0, "ZZ"), rng), EnvironmentError);
    EXPECT_THROW(env.step(act(0, "I"), rng), EnvironmentError);
}

TEST(quantum_env, entangled_examples)
{
    RandomSource rng(3);
    auto id = gate_env("I", 1, true);
    std::map<std::string, int> zz, xx;
    for (int k = 0; k < 4000; ++k) {
        ++zz[id.step_entangled(PauliString::parse("ZZ"), rng)];
        ++xx[id.step_entangled(PauliString::parse("XX"), rng)];
    }
    EXPECT_EQ(zz.count("01") + zz.count("10"), 0u);
    EXPECT_EQ(xx.count("01") + xx.count("10"), 0u);
    EXPECT_NEAR(zz["00"] / 4000.0, 0.5, 0.04);
    EXPECT_NEAR(xx["00"] / 4000.0, 0.5, 0.04);

    // Oracle for XX: rotate Omega with H (x) H and read off |amplitude|^2.
    Matrix const hh = tensor(gate_matrix("H"), gate_matrix("H"));
    Vector const rotated = hh * omega_state(1);
    auto const& probs = id.entangled_distribution(PauliString::parse("XX"));
    for (Index b = 0; b < 4; ++b)
        EXPECT_NEAR(probs[static_cast<std::size_t>(b)], std::norm(rotated(b)), 1e-12);

    auto x = gate_env("X", 1, true);
    for (int k = 0; k < 200; ++k) {
        auto const out = x.step_entangled(PauliString::parse("ZZ"), rng);
        EXPECT_TRUE(out == "01" || out == "10") << out;
    }
    // Oracle: (X (x) I)|Omega> = (|10> + |01>)/sqrt(2).
    auto const& px = x.entangled_distribution(PauliString::parse("ZZ"));
    EXPECT_NEAR(px[1], 0.5, 1e-12);
    EXPECT_NEAR(px[2], 0.5, 1e-12);

    auto plain = gate_env("I");
    EXPECT_THROW(plain.step_entangled(PauliString::parse("ZZ"), rng), EnvironmentError);
    EXPECT_THROW(id.step_entangled(PauliString::parse("Z"), rng), EnvironmentError);
}

TEST(quantum_env, empirical_matches_analytic_for_registry)
{
    RandomSource rng(2024);
    for (const auto& name : single_qubit_registry()) {
        std::string spec = name == "RX" ? "RX(0.7)" : name == "RZ" ? "RZ(1.1)" : name == "DEPOL" ? "DEPOL(0.5)" : name;
        auto env = gate_env(spec);
        for (auto const& a : {act(0, "Z"), act(2, "Y")}) {
            auto const& probs = env.distribution(a);
            DensityMatrix const out = env.channel().apply(pauli_eigenstate(a.prep_index, 1));
            EXPECT_NEAR(probs[0], outcome_probabilities(out, a.basis)[0], 1e-12);
            int const shots = 100000;
            auto const counts = tally(env, a, shots, rng);
            double const p = probs[0];
            double const freq = (counts.count("0") ? counts.at("0") : 0) / static_cast<double>(shots);
            double const sigma = std::sqrt(p * (1 - p) / shots);
            EXPECT_LE(std::abs(freq - p), 3 * sigma + 1e-12) << spec << " " << a.encode();
        }
    }
}

TEST(quantum_env, deterministic_under_seed_and_clone_resets)
{
    auto env = gate_env("H");
    auto twin = env.clone_quantum();
    RandomSource a(42), b(42);
    for (std::size_t k = 0; k < 500; ++k)
        EXPECT_EQ(env.step(k % 18, a), twin->step(k % 18, b));
}

TEST(quantum_env, swap_channel_and_log)
{
    RandomSource rng(0);
    auto env = gate_env("I");
    PerceptLog log;
    env.attach_log(&log);
    EXPECT_EQ(env.step(act(0, "Z"), rng), "0");
    env.swap_channel(QuantumChannel::unitary(gate_matrix("X")));
    EXPECT_EQ(env.step(act(0, "Z"), rng), "1");
    ASSERT_EQ(log.records().size(), 2u);
    std::ostringstream out;
    log.write_csv(out);
    EXPECT_EQ(out.str(), "step,action,outcome\n0,Z+:Z,0\n1,Z+:Z,1\n");
    EXPECT_THROW(env.swap_channel(QuantumChannel::identity(2)), EnvironmentError);
}

TEST(toy_env, patterns)
{
    RandomSource rng(0);
    ToyPatternEnvironment a("01");
    EXPECT_EQ(a.step(0, rng), "0");
    EXPECT_EQ(a.step(0, rng), "1");
    EXPECT_EQ(a.step(0, rng), "0");

    ToyPatternEnvironment ones("1");
    for (int k = 0; k < 10; ++k)
        EXPECT_EQ(ones.step(0, rng), "1");

    ToyPatternEnvironment c("0011");
    std::string seen;
    for (int k = 0; k < 5; ++k)
        seen += c.step(0, rng);
    EXPECT_EQ(seen, "00110");
    EXPECT_EQ(c.clone()->step(0, rng), "0");

    EXPECT_THROW(ToyPatternEnvironment(""), EnvironmentError);
    EXPECT_THROW(c.step(1, rng), EnvironmentError);
}

TEST(registry, resolution)
{
    EXPECT_EQ(single_qubit_registry().size(), 10u);
    EXPECT_TRUE(approx_equal(make_registry_channel("RX(3.141592653589793)", 1).kraus().front(),
                             Complex(0, -1) * pauli_matrix(Pauli::X), 1e-12));
    EXPECT_EQ(make_registry_channel("CNOT", 2).n_qubits(), 2);
    EXPECT_EQ(make_registry_channel("H", 2).n_qubits(), 2);
    EXPECT_THROW(make_registry_channel("CNOT", 1), EnvironmentError);
    EXPECT_THROW(make_registry_channel("RX", 1), EnvironmentError);
    EXPECT_THROW(make_registry_channel("H(0.1)", 1), EnvironmentError);
    EXPECT_THROW(make_registry_channel("FOO", 1), QuantumError);
}

TEST(env_config, parse_and_serialize)
{
    auto const file = KeyValueFile::parse("n_qubits = 1   # one qubit\nchannel.gate = RX(0.5)\n"
                                          "entangled_mode = true\nseed = 12\n");
    auto const cfg = parse_env_config(file);
    EXPECT_EQ(cfg.n_qubits, 1);
    EXPECT_EQ(*cfg.channel.gate, "RX(0.5)");
    EXPECT_TRUE(cfg.entangled_mode);
    EXPECT_EQ(cfg.seed, 12u);
    auto const again = parse_env_config(KeyValueFile::parse(serialize_env_config(cfg)));
    EXPECT_EQ(serialize_env_config(again), serialize_env_config(cfg));

    auto const kraus = parse_env_config(
        KeyValueFile::parse("n_qubits = 1\nchannel.kraus = 1 0 0 0 0 0 0 0 ; 0 0 1 0 0 0 0 0\n"));
    ASSERT_EQ(kraus.channel.kraus.size(), 2u);
    EXPECT_EQ(kraus.channel.kraus[1](0, 1), Complex(1.0));
    QuantumEnvironment reset(kraus);
    RandomSource rng(0);
    EXPECT_EQ(reset.step(act(1, "Z"), rng), "0");
    auto const round = parse_env_config(KeyValueFile::parse(serialize_env_config(kraus)));
    EXPECT_TRUE(approx_equal(round.channel.kraus[1], kraus.channel.kraus[1], 0.0));
}

TEST(env_config, errors)
{
    EXPECT_THROW(parse_env_config(KeyValueFile::parse("n_qubits = 1\n")), ConfigError);
    EXPECT_THROW(parse_env_config(KeyValueFile::parse("n_qubits = 1\nchannel.gate = H\nchannel.kraus = 1 0 0 0 0 0 1 0\n")),
                 ConfigError);
    EXPECT_THROW(parse_env_config(KeyValueFile::parse("n_qubits = 4\nchannel.gate = H\n")), ConfigError);
    EXPECT_THROW(parse_env_config(KeyValueFile::parse("n_qubits = 1\nchannel.gate = H\ncolour = red\n")), ConfigError);
    EXPECT_THROW(parse_env_config(KeyValueFile::parse("n_qubits = 1\nchannel.kraus = 1 0 0\n")), ConfigError);
    EXPECT_THROW(KeyValueFile::parse("n_qubits 1\n"), ConfigError);
    EXPECT_THROW(KeyValueFile::parse("a = 1\na = 2\n"), ConfigError);

    // Parses, but is not CPTP: rejected when the channel is resolved.
    auto const lossy = parse_env_config(KeyValueFile::parse("n_qubits = 1\nchannel.kraus = 0.5 0 0 0 0 0 0.5 0\n"));
    EXPECT_THROW(QuantumEnvironment{lossy}, QuantumError);

    try {
        KeyValueFile::parse("ok = 1\nbroken\n", "env.cfg");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_NE(std::string(e.what()).find("env.cfg:2"), std::string::npos);
    }
}

TEST(config, numbers)
{
    EXPECT_EQ(parse_double("-inf").value(), -INFINITY);
    EXPECT_EQ(parse_double("1e9").value(), 1e9);
    EXPECT_FALSE(parse_double("1.0x"));
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(parse_double(format_double17(0.1)).value(), 0.1);
    EXPECT_EQ(format_double(-INFINITY), "-inf");
}
