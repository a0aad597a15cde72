#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "qksa/metrics.hpp"

using namespace qksa;

namespace {

LeastEstimate random_estimate(RandomSource& rng, double scale = 100.0)
{
    LeastEstimate est;
    for (Metric m : kMetrics)
        est[m] = rng.bernoulli(0.1) ? 0.0 : rng.uniform(0.0, scale);
    return est;
}

const char* kSeedText = "(add (add (add (add (mul w_l l) (mul w_e e)) (mul w_a a)) (mul w_s s)) (mul w_t t))";

} // namespace

TEST(Bounds, Examples)
{
    EXPECT_TRUE(within_bounds({1, 1, 0, 1, 1}, {2, 2, 1, 2, 2}));
    LeastBounds const b{2, 2, 1, 2, 2};
    LeastEstimate over{1, 1, 0, 1, b.t + 1};
    EXPECT_FALSE(within_bounds(over, b));
    EXPECT_TRUE(within_bounds(b, b));
}

TEST(Bounds, MonotoneInEveryEstimate)
{
    RandomSource rng(12);
    LeastBounds const b{50, 50, 50, 50, 50};
    for (int trial = 0; trial < 2000; ++trial) {
        LeastEstimate est = random_estimate(rng);
        bool const before = within_bounds(est, b);
        est[kMetrics[rng.below(5)]] += rng.uniform(0.0, 30.0);
        if (!before) {
            EXPECT_FALSE(within_bounds(est, b));
        }
    }
}

TEST(Estimate, ApproximationIsMeanDeviation)
{
    ExecutionTrace trace;
    trace.count_measurements(3);
    trace.deviations = {0, 0, 0};
    EXPECT_EQ(estimate_least({Method::sqpt, 10}, trace).a, 0.0);
    trace.deviations = {1, 0, 2, 1};
    EXPECT_DOUBLE_EQ(estimate_least({Method::sqpt, 10}, trace).a, 1.0);
}

TEST(Estimate, TimeCountsQstMeasurements)
{
    RandomSource rng(4);
    QuantumEnvironment env(QuantumChannel::identity(1), false);
    LeastEstimate previous{};
    for (long shots : {1L, 10L, 100L, 1000L}) {
        ExecutionTrace trace;
        qst(env, 0, shots, rng, &trace);
        auto const est = estimate_least({Method::qst, shots}, trace);
        EXPECT_EQ(est.t, 3.0 * static_cast<double>(shots));
        if (shots > 1) {
            EXPECT_LT(previous.t, est.t);
            EXPECT_LT(previous.e, est.e);
        }
        previous = est;
    }
}

TEST(Estimate, LengthIsDescriptorLength)
{
    ExecutionTrace trace;
    trace.count_matrix_ops();
    EXPECT_EQ(estimate_least({Method::sqpt, 1000}, trace).l, 15.0);  // "sqpt:shots=1000"
    EXPECT_EQ(estimate_least({Method::eapt, 10}, trace).l, 13.0);
}

TEST(Estimate, EmptyTraceIsRejected)
{
    EXPECT_THROW(estimate_least({Method::sqpt, 10}, ExecutionTrace{}), MetricsError);
}

TEST(Cost, SeedExamples)
{
    auto const seed = CostExpr::seed();
    EXPECT_EQ(eval_cost(seed, {1, 2, 3, 4, 5}, kUnitWeights), 15.0);
    EXPECT_EQ(eval_cost(seed, {0, 0, 0, 0, 0}, kUnitWeights), 0.0);
    EXPECT_EQ(seed.str(), kSeedText);
    EXPECT_EQ(seed.depth(), 5);
}

TEST(Cost, SeedIsWeightedSum)
{
    RandomSource rng(8);
    auto const seed = CostExpr::seed();
    for (int trial = 0; trial < 1000; ++trial) {
        LeastEstimate const e = random_estimate(rng, 1e6);
        Weights const w = random_estimate(rng, 3.0);
        double const expected = w.l * e.l + w.e * e.e + w.a * e.a + w.s * e.s + w.t * e.t;
        EXPECT_EQ(eval_cost(seed, e, w), expected);
    }
}

TEST(Cost, GuardRules)
{
    LeastEstimate const est{2, 1, 0, 1, 1};
    EXPECT_EQ(eval_cost(CostExpr::parse("(div (mul w_l l) (mul w_a a))"), est, kUnitWeights), 1e9);
    EXPECT_EQ(eval_cost(CostExpr::parse("(div 1 1e-10)"), est, kUnitWeights), 1e9);
    EXPECT_DOUBLE_EQ(eval_cost(CostExpr::parse("(log (mul w_a a))"), est, kUnitWeights), std::log(1e-9));
    EXPECT_DOUBLE_EQ(eval_cost(CostExpr::parse("(log -3)"), est, kUnitWeights), std::log(1e-9));
    EXPECT_DOUBLE_EQ(eval_cost(CostExpr::parse("(exp 1000)"), est, kUnitWeights), std::exp(50.0));
    double const big = eval_cost(CostExpr::parse("(mul (exp 1000) (mul (exp 1000) (mul (exp 1000) (exp 1000))))"),
                                 est, kUnitWeights);
    EXPECT_TRUE(std::isfinite(big));
    EXPECT_DOUBLE_EQ(eval_cost(CostExpr::parse("(sub (mul w_l l) 0.5)"), est, kUnitWeights), 1.5);
}

TEST(Cost, RandomTreesStayFinite)
{
    RandomSource rng(2024);
    for (int trial = 0; trial < 10000; ++trial) {
        auto const tree = random_cost_expr(rng, kMaxDepth);
        ASSERT_LE(tree.depth(), kMaxDepth);
        LeastEstimate est = random_estimate(rng, rng.bernoulli(0.5) ? 1.0 : 1e12);
        Weights w = random_estimate(rng, 10.0);
        double const c = eval_cost(tree, est, w);
        ASSERT_TRUE(std::isfinite(c)) << tree.str();
    }
}

TEST(CostParse, RoundTripAndErrors)
{
    for (const char* text : {kSeedText, "(log (add 1.5 (mul w_t t)))", "3", "(exp (div (mul w_s s) -0.25))"})
        EXPECT_EQ(CostExpr::parse(text).str(), text);
    EXPECT_EQ(CostExpr::parse("  ( add 1\n 2 ) ").str(), "(add 1 2)");

    auto column_of = [](const char* text) {
        try {
            CostExpr::parse(text);
        } catch (const CostParseError& e) {
            return e.column();
        }
        return -1;
    };
    EXPECT_EQ(column_of("(pow 1 2)"), 2);
    EXPECT_EQ(column_of("(add 1 (mul w_l e))"), 17);
    EXPECT_EQ(column_of("(add 1)"), 7);
    EXPECT_EQ(column_of("(log 1 2)"), 8);
    EXPECT_EQ(column_of("1 2"), 3);
    EXPECT_EQ(column_of("(add 1 zz)"), 8);
    EXPECT_GT(column_of(""), 0);

    std::string deep = "1";
    for (int k = 0; k < kMaxDepth; ++k)
        deep = "(log " + deep + ")";
    EXPECT_GT(column_of(deep.c_str()), 0);
}

TEST(CostExpr, ArityIsChecked)
{
    EXPECT_THROW(CostExpr({{Op::add}, {Op::constant}}), MetricsError);
    EXPECT_THROW(CostExpr({{Op::constant}, {Op::constant}}), MetricsError);
    EXPECT_THROW(CostExpr(std::vector<Node>{}), MetricsError);
    EXPECT_NO_THROW(CostExpr({{Op::exp}, {Op::term, Metric::a}}));
}

TEST(Gene, SerializationRoundTripsByteForByte)
{
    RandomSource rng(31);
    Gene g;
    std::vector<Gene> genes = {g};
    Gene immortal = g;
    immortal.R_D = -std::numeric_limits<double>::infinity();
    immortal.gamma = 0.1;
    immortal.weights.a = 0.1 + 0.2;
    genes.push_back(immortal);
    Gene wild = g;
    wild.m_c = 1.0;
    for (int k = 0; k < 20; ++k)
        genes.push_back(wild = mutate(wild, rng));
    for (const auto& gene : genes) {
        std::string const text = gene.serialize();
        Gene const back = Gene::parse(text);
        EXPECT_EQ(back.serialize(), text);
        EXPECT_EQ(back, gene);
    }
}

TEST(Gene, InvariantsAreEnforced)
{
    auto rejects = [](auto edit) {
        Gene g;
        edit(g);
        EXPECT_TRUE(g.validate().has_value());
        EXPECT_THROW(Gene::parse(g.serialize()), ConfigError);
    };
    rejects([](Gene& g) { g.R_D = 1.0; g.R_R = 0.0; });
    rejects([](Gene& g) { g.R_D = -1.0; g.R_R = -1.0; });
    rejects([](Gene& g) { g.R_R = 0.5; });
    rejects([](Gene& g) { g.m_c = 1.5; });
    rejects([](Gene& g) { g.t_f = 0; });
    rejects([](Gene& g) { g.t_p = 20; g.s_c = 16; });
    rejects([](Gene& g) { g.t_p = 4; g.gamma = 0.5; });
    rejects([](Gene& g) { g.bounds.a = 0.0; });
    EXPECT_FALSE(Gene{}.validate().has_value());
}

TEST(Gene, ParseErrorsCarryLocation)
{
    std::string text = Gene{}.serialize();
    auto const at = text.find("cost = (add");
    text.replace(at + 8, 3, "pow");
    try {
        Gene::parse(text, "g.gene");
        FAIL() << "expected a ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.source(), "g.gene");
        EXPECT_EQ(e.line(), 11);
        EXPECT_EQ(e.column(), 9);
        EXPECT_NE(std::string(e.what()).find("pow"), std::string::npos);
    }
    EXPECT_THROW(Gene::parse("l_max = 1\n"), ConfigError);
    EXPECT_THROW(Gene::parse(Gene{}.serialize() + "colour = red\n"), ConfigError);
}

TEST(Mutation, ZeroRateCopiesParent)
{
    RandomSource rng(1);
    Gene g;
    g.m_c = 0.0;
    EXPECT_EQ(mutate(g, rng), g);
}

TEST(Mutation, FullRateIsDeterministicAndChangesEveryNode)
{
    Gene g;
    g.m_c = 1.0;
    RandomSource a(77), b(77);
    Gene const x = mutate(g, a);
    Gene const y = mutate(g, b);
    EXPECT_EQ(x, y);
    ASSERT_EQ(x.cost.size(), g.cost.size());
    for (std::size_t k = 0; k < g.cost.size(); ++k) {
        EXPECT_NE(x.cost.nodes()[k], g.cost.nodes()[k]) << k;
        EXPECT_EQ(arity(x.cost.nodes()[k].op), arity(g.cost.nodes()[k].op));
    }
}

TEST(Mutation, OffspringStayWellFormed)
{
    RandomSource rng(5);
    Gene parent;
    parent.m_c = 0.1;
    parent.cost = CostExpr::parse("(add (log (mul w_l l)) (div 2.5 (exp (mul w_t t))))");
    for (int trial = 0; trial < 1000; ++trial) {
        Gene const child = mutate(trial % 2 ? parent : Gene{}, rng);
        Gene const& p = trial % 2 ? parent : Gene{};
        ASSERT_FALSE(child.validate().has_value());
        EXPECT_TRUE(std::isfinite(eval_cost(child.cost, {1, 1, 1, 1, 1}, child.weights)));
        EXPECT_EQ(child.cost.depth(), p.cost.depth());
        EXPECT_EQ(child.bounds, p.bounds);
        EXPECT_EQ(child.R_D, p.R_D);
        EXPECT_EQ(child.R_R, p.R_R);
        EXPECT_EQ(child.t_p, p.t_p);
        EXPECT_EQ(child.lifespan, p.lifespan);
        for (Metric m : kMetrics) {
            EXPECT_GE(child.weights[m], 0.9 * p.weights[m]);
            EXPECT_LE(child.weights[m], 1.1 * p.weights[m]);
        }
        for (std::size_t k = 0; k < p.cost.size(); ++k) {
            const Node& before = p.cost.nodes()[k];
            const Node& after = child.cost.nodes()[k];
            if (before.op == Op::constant && after.op == Op::constant) {
                EXPECT_GE(std::abs(after.value), 0.9 * std::abs(before.value) - 1e-15);
                EXPECT_LE(std::abs(after.value), 1.1 * std::abs(before.value) + 1e-15);
            }
        }
    }
}

TEST(Mutation, SeedOffspringEvaluateFinitely)
{
    RandomSource rng(10);
    Gene seed;
    seed.m_c = 0.1;
    for (int k = 0; k < 1000; ++k) {
        Gene const child = mutate(seed, rng);
        EXPECT_TRUE(std::isfinite(eval_cost(child.cost, {1, 1, 1, 1, 1}, child.weights)));
    }
}
