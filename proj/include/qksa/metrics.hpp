#pragma once

// Least-metric estimates, bounds, the evolvable cost expression and the gene
// that carries them.
//
// Cost expression grammar (s-expression, whitespace separated):
//
//   expr  := number
//          | "(" "mul" weight metric ")"      weighted estimate, e.g. (mul w_a a)
//          | "(" binop expr expr ")"          binop := add | sub | mul | div
//          | "(" unop expr ")"                unop  := log | exp
//   weight := w_l | w_e | w_a | w_s | w_t     (must match the metric letter)
//   metric := l | e | a | s | t

#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qksa/config.hpp"
#include "qksa/random.hpp"
#include "qksa/tomography.hpp"
#include "qksa/trace.hpp"

namespace qksa {

class MetricsError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Syntax error in a cost expression; `column` is 1-based within the text.
class CostParseError : public MetricsError
{
public:
    CostParseError(const std::string& message, int column)
        : MetricsError("column " + std::to_string(column) + ": " + message), message_(message), column_(column)
    {
    }

    const std::string& message() const { return message_; }
    int column() const { return column_; }

private:
    std::string message_;
    int column_;
};

enum class Metric { l, e, a, s, t };
inline constexpr std::array<Metric, 5> kMetrics = {Metric::l, Metric::e, Metric::a, Metric::s, Metric::t};

inline char metric_char(Metric m) { return "least"[static_cast<int>(m)]; }

/// Five-slot record used for estimates, bounds and weights alike.
struct MetricTuple
{
    double l = 0.0;
    double e = 0.0;
    double a = 0.0;
    double s = 0.0;
    double t = 0.0;

    double& operator[](Metric m)
    {
        switch (m) {
        case Metric::l: return l;
        case Metric::e: return e;
        case Metric::a: return a;
        case Metric::s: return s;
        case Metric::t: return t;
        }
        return l;
    }
    double operator[](Metric m) const { return const_cast<MetricTuple&>(*this)[m]; }

    friend bool operator==(const MetricTuple&, const MetricTuple&) = default;
};

using LeastEstimate = MetricTuple;
using LeastBounds = MetricTuple;
using Weights = MetricTuple;

inline constexpr Weights kUnitWeights{1.0, 1.0, 1.0, 1.0, 1.0};

/// Closed inequality on all five slots.
inline bool within_bounds(const LeastEstimate& est, const LeastBounds& bounds)
{
    for (Metric m : kMetrics)
        if (!(est[m] <= bounds[m]))
            return false;
    return true;
}

/// Resource footprint of running `strategy` as recorded in `trace`.
inline LeastEstimate estimate_least(const QPTStrategy& strategy, const ExecutionTrace& trace)
{
    if (trace.empty())
        throw MetricsError("cannot estimate resources from an empty execution trace");
    LeastEstimate est;
    est.l = static_cast<double>(strategy.descriptor().size());
    est.e = static_cast<double>(trace.measurements + trace.matrix_ops);
    if (!trace.deviations.empty()) {
        double sum = 0.0;
        for (double d : trace.deviations)
            sum += d;
        est.a = sum / static_cast<double>(trace.deviations.size());
    }
    est.s = static_cast<double>(trace.peak_cells);
    est.t = static_cast<double>(trace.measurements);
    return est;
}

// ---------------------------------------------------------------------------
// cost expression

enum class Op { add, sub, mul, div, log, exp, term, constant };

inline int arity(Op op)
{
    switch (op) {
    case Op::add: case Op::sub: case Op::mul: case Op::div: return 2;
    case Op::log: case Op::exp: return 1;
    case Op::term: case Op::constant: return 0;
    }
    return 0;
}

inline const char* op_name(Op op)
{
    switch (op) {
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::log: return "log";
    case Op::exp: return "exp";
    case Op::term: return "term";
    case Op::constant: return "const";
    }
    return "?";
}

struct Node
{
    Op op = Op::constant;
    Metric metric = Metric::l;  ///< Op::term only
    double value = 0.0;         ///< Op::constant only

    friend bool operator==(const Node&, const Node&) = default;
};

inline constexpr int kMaxDepth = 12;
inline constexpr double kDivisionSentinel = 1e9;
inline constexpr double kLogFloor = 1e-9;
inline constexpr double kExpCap = 50.0;
inline constexpr double kValueClamp = 1e300;

class CostExpr
{
public:
    CostExpr() = default;

    /// Nodes in prefix order. Throws on arity violations.
    explicit CostExpr(std::vector<Node> prefix) : nodes_(std::move(prefix))
    {
        if (auto problem = check(nodes_))
            throw MetricsError("malformed cost expression: " + *problem);
    }

    /// Weighted sum of all five estimates, folded left:
    /// (add (add (add (add l e) a) s) t) with every leaf a weighted term.
    static CostExpr seed()
    {
        return CostExpr({{Op::add}, {Op::add}, {Op::add}, {Op::add}, {Op::term, Metric::l}, {Op::term, Metric::e},
                         {Op::term, Metric::a}, {Op::term, Metric::s}, {Op::term, Metric::t}});
    }

    static CostExpr parse(std::string_view text) { return Parser(text).run(); }

    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }

    int depth() const
    {
        std::size_t pos = 0;
        return depth_at(nodes_, pos);
    }

    std::string str() const
    {
        std::string out;
        std::size_t pos = 0;
        write(out, pos);
        return out;
    }

    friend bool operator==(const CostExpr&, const CostExpr&) = default;

    static std::optional<std::string> check(const std::vector<Node>& nodes)
    {
        if (nodes.empty())
            return std::string("empty expression");
        long pending = 1;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            if (pending == 0)
                return "trailing nodes after position " + std::to_string(k);
            pending += arity(nodes[k].op) - 1;
        }
        if (pending != 0)
            return std::string("operator is missing operands");
        std::size_t pos = 0;
        if (depth_at(nodes, pos) > kMaxDepth)
            return "deeper than " + std::to_string(kMaxDepth);
        for (const auto& n : nodes)
            if (n.op == Op::constant && !std::isfinite(n.value))
                return std::string("non-finite constant");
        return std::nullopt;
    }

private:
    static int depth_at(const std::vector<Node>& nodes, std::size_t& pos)
    {
        int const k = arity(nodes[pos++].op);
        int deepest = 0;
        for (int c = 0; c < k; ++c)
            deepest = std::max(deepest, depth_at(nodes, pos));
        return 1 + deepest;
    }

    void write(std::string& out, std::size_t& pos) const
    {
        const Node& n = nodes_[pos++];
        switch (n.op) {
        case Op::constant:
            out += format_double(n.value);
            return;
        case Op::term:
            out += "(mul w_";
            out += metric_char(n.metric);
            out += ' ';
            out += metric_char(n.metric);
            out += ')';
            return;
        default:
            out += '(';
            out += op_name(n.op);
            for (int c = 0; c < arity(n.op); ++c) {
                out += ' ';
                write(out, pos);
            }
            out += ')';
        }
    }

    class Parser
    {
    public:
        explicit Parser(std::string_view text) : text_(text) {}

        CostExpr run()
        {
            std::vector<Node> nodes;
            expr(nodes, 1);
            skip_space();
            if (pos_ != text_.size())
                fail("unexpected text after expression");
            if (auto problem = check(nodes))
                fail(*problem);
            return CostExpr(std::move(nodes));
        }

    private:
        [[noreturn]] void fail(const std::string& message) const
        {
            throw CostParseError(message, static_cast<int>(pos_) + 1);
        }

        void skip_space()
        {
            while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
                ++pos_;
        }

        std::string_view token()
        {
            skip_space();
            std::size_t const start = pos_;
            if (pos_ < text_.size() && (text_[pos_] == '(' || text_[pos_] == ')'))
                return text_.substr(pos_++, 1);
            while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
                   text_[pos_] != '(' && text_[pos_] != ')')
                ++pos_;
            return text_.substr(start, pos_ - start);
        }

        std::size_t peek_start()
        {
            skip_space();
            return pos_;
        }

        static std::optional<Metric> metric_of(std::string_view s)
        {
            if (s.size() != 1)
                return std::nullopt;
            for (Metric m : kMetrics)
                if (metric_char(m) == s[0])
                    return m;
            return std::nullopt;
        }

        void expect_close()
        {
            std::size_t const at = peek_start();
            if (token() != ")") {
                pos_ = at;
                fail("expected ')'");
            }
        }

        void expr(std::vector<Node>& nodes, int depth)
        {
            std::size_t const at = peek_start();
            if (depth > kMaxDepth)
                fail("expression deeper than " + std::to_string(kMaxDepth));
            std::string_view const tok = token();
            if (tok.empty()) {
                pos_ = at;
                fail("unexpected end of expression");
            }
            if (tok == ")") {
                pos_ = at;
                fail("unexpected ')'");
            }
            if (tok != "(") {
                auto v = parse_double(tok);
                if (!v || !std::isfinite(*v)) {
                    pos_ = at;
                    fail("expected a number or '(' but found '" + std::string(tok) + "'");
                }
                nodes.push_back({Op::constant, Metric::l, *v});
                return;
            }
            std::size_t const op_at = peek_start();
            std::string_view const name = token();
            static constexpr Op ops[] = {Op::add, Op::sub, Op::mul, Op::div, Op::log, Op::exp};
            std::optional<Op> op;
            for (Op o : ops)
                if (name == op_name(o))
                    op = o;
            if (!op) {
                pos_ = op_at;
                fail("unknown operator '" + std::string(name) + "'");
            }
            if (*op == Op::mul) {
                // weighted-estimate leaf?
                std::size_t const save = pos_;
                std::string_view const w = token();
                if (w.size() == 3 && w.substr(0, 2) == "w_") {
                    auto const wm = metric_of(w.substr(2));
                    std::size_t const m_at = peek_start();
                    auto const m = metric_of(token());
                    if (!wm || !m || *wm != *m) {
                        pos_ = m_at;
                        fail("weight '" + std::string(w) + "' must multiply its own estimate");
                    }
                    expect_close();
                    nodes.push_back({Op::term, *m});
                    return;
                }
                pos_ = save;
            }
            nodes.push_back({*op});
            for (int c = 0; c < arity(*op); ++c)
                expr(nodes, depth + 1);
            expect_close();
        }

        std::string_view text_;
        std::size_t pos_ = 0;
    };

    std::vector<Node> nodes_;
};

namespace detail {

inline double clamp_value(double x)
{
    if (std::isnan(x))
        return kValueClamp;
    return std::clamp(x, -kValueClamp, kValueClamp);
}

inline double eval_at(const std::vector<Node>& nodes, std::size_t& pos, const LeastEstimate& est, const Weights& w)
{
    const Node& n = nodes[pos++];
    switch (n.op) {
    case Op::constant: return clamp_value(n.value);
    case Op::term: return clamp_value(w[n.metric] * est[n.metric]);
    case Op::log: {
        double const x = eval_at(nodes, pos, est, w);
        return clamp_value(std::log(x <= 0.0 ? kLogFloor : x));
    }
    case Op::exp: return clamp_value(std::exp(std::min(eval_at(nodes, pos, est, w), kExpCap)));
    default: break;
    }
    double const a = eval_at(nodes, pos, est, w);
    double const b = eval_at(nodes, pos, est, w);
    switch (n.op) {
    case Op::add: return clamp_value(a + b);
    case Op::sub: return clamp_value(a - b);
    case Op::mul: return clamp_value(a * b);
    case Op::div: return std::abs(b) < 1e-9 ? kDivisionSentinel : clamp_value(a / b);
    default: break;
    }
    throw MetricsError("unknown operator in cost expression");
}

} // namespace detail

inline double eval_cost(const CostExpr& cost, const LeastEstimate& est, const Weights& w)
{
    if (auto problem = CostExpr::check(cost.nodes()))
        throw MetricsError("malformed cost expression: " + *problem);
    std::size_t pos = 0;
    return detail::eval_at(cost.nodes(), pos, est, w);
}

/// Grow-method random tree, for property sweeps and fresh populations.
inline CostExpr random_cost_expr(RandomSource& rng, int max_depth = 6)
{
    std::vector<Node> nodes;
    auto grow = [&](auto& self, int depth) -> void {
        bool const leaf = depth >= max_depth || (depth > 1 && rng.bernoulli(0.3));
        if (leaf) {
            if (rng.bernoulli(0.7))
                nodes.push_back({Op::term, kMetrics[rng.below(5)]});
            else
                nodes.push_back({Op::constant, Metric::l, rng.uniform(-10.0, 10.0)});
            return;
        }
        static constexpr Op ops[] = {Op::add, Op::sub, Op::mul, Op::div, Op::log, Op::exp};
        Op const op = ops[rng.below(6)];
        nodes.push_back({op});
        for (int c = 0; c < arity(op); ++c)
            self(self, depth + 1);
    };
    grow(grow, 1);
    return CostExpr(std::move(nodes));
}

// ---------------------------------------------------------------------------
// gene

struct Gene
{
    LeastBounds bounds{1e3, 1e9, 1.0, 1e6, 1e9};
    Weights weights = kUnitWeights;
    CostExpr cost = CostExpr::seed();
    double m_c = 0.1;       ///< per-node mutation probability
    double gamma = 0.0;     ///< linear discount per step back
    double R_D = -4.0;      ///< die below this return
    double R_R = 0.0;       ///< replicate below this return
    int t_p = 4;            ///< past window
    int t_f = 1;            ///< lookahead depth
    long lifespan = 100;    ///< max cycles
    int s_c = 16;           ///< memory budget, caps t_p
    int ulba_n = 2;         ///< inert: alphabet size
    int ulba_m = 16;        ///< inert: state size

    std::optional<std::string> validate() const
    {
        for (Metric m : kMetrics)
            if (!(bounds[m] > 0.0))
                return std::string("bound ") + metric_char(m) + "_max must be positive";
        for (Metric m : kMetrics)
            if (!std::isfinite(weights[m]))
                return std::string("weight w_") + metric_char(m) + " must be finite";
        if (auto problem = CostExpr::check(cost.nodes()))
            return "cost: " + *problem;
        if (!(m_c >= 0.0 && m_c <= 1.0))
            return std::string("m_c must lie in [0, 1]");
        if (!(R_D < R_R))
            return std::string("R_D must be below R_R");
        if (!(R_R <= 0.0))
            return std::string("R_R must not be positive");
        if (t_f < 1)
            return std::string("t_f must be at least 1");
        if (t_p < 1)
            return std::string("t_p must be at least 1");
        if (s_c < 1 || t_p > s_c)
            return std::string("t_p must not exceed s_c");
        if (!(gamma >= 0.0) || gamma * (t_p - 1) > 1.0)
            return std::string("gamma must satisfy 0 <= gamma * (t_p - 1) <= 1");
        if (lifespan < 1)
            return std::string("lifespan must be at least 1");
        return std::nullopt;
    }

    std::string serialize() const
    {
        std::string out;
        auto put = [&](const char* key, const std::string& value) {
            out += key;
            out += " = ";
            out += value;
            out += '\n';
        };
        for (Metric m : kMetrics)
            put((std::string(1, metric_char(m)) + "_max").c_str(), format_double(bounds[m]));
        for (Metric m : kMetrics)
            put((std::string("w_") + metric_char(m)).c_str(), format_double(weights[m]));
        put("cost", cost.str());
        put("m_c", format_double(m_c));
        put("gamma", format_double(gamma));
        put("R_D", format_double(R_D));
        put("R_R", format_double(R_R));
        put("t_p", std::to_string(t_p));
        put("t_f", std::to_string(t_f));
        put("lifespan", std::to_string(lifespan));
        put("s_c", std::to_string(s_c));
        put("ulba_n", std::to_string(ulba_n));
        put("ulba_m", std::to_string(ulba_m));
        return out;
    }

    static Gene from_file(const KeyValueFile& file)
    {
        file.require_known({"l_max", "e_max", "a_max", "s_max", "t_max", "w_l", "w_e", "w_a", "w_s", "w_t", "cost",
                            "m_c", "gamma", "R_D", "R_R", "t_p", "t_f", "lifespan", "s_c", "ulba_n", "ulba_m"});
        Gene g;
        for (Metric m : kMetrics) {
            g.bounds[m] = file.get_double(std::string(1, metric_char(m)) + "_max");
            g.weights[m] = file.get_double(std::string("w_") + metric_char(m));
        }
        const auto& cost = file.require("cost");
        try {
            g.cost = CostExpr::parse(cost.value);
        } catch (const CostParseError& e) {
            throw ConfigError("cost: " + e.message(), file.source(), cost.line, cost.value_column + e.column() - 1);
        }
        g.m_c = file.get_double("m_c");
        g.gamma = file.get_double("gamma");
        g.R_D = file.get_double("R_D");
        g.R_R = file.get_double("R_R");
        g.t_p = static_cast<int>(file.get_integer("t_p"));
        g.t_f = static_cast<int>(file.get_integer("t_f"));
        g.lifespan = file.get_integer("lifespan");
        g.s_c = static_cast<int>(file.get_integer("s_c"));
        g.ulba_n = file.has("ulba_n") ? static_cast<int>(file.get_integer("ulba_n")) : 2;
        g.ulba_m = file.has("ulba_m") ? static_cast<int>(file.get_integer("ulba_m")) : 16;
        if (auto problem = g.validate())
            throw ConfigError("invalid gene: " + *problem, file.source());
        return g;
    }

    static Gene parse(std::string_view text, std::string source = "<gene>")
    {
        return from_file(KeyValueFile::parse(text, std::move(source)));
    }

    static Gene load(const std::filesystem::path& path) { return from_file(KeyValueFile::load(path)); }

    friend bool operator==(const Gene&, const Gene&) = default;
};

// ---------------------------------------------------------------------------
// mutation

namespace detail {

inline Node mutate_node(const Node& n, RandomSource& rng)
{
    Node out = n;
    switch (arity(n.op)) {
    case 2: {
        static constexpr Op binary[] = {Op::add, Op::sub, Op::mul, Op::div};
        do
            out.op = binary[rng.below(4)];
        while (out.op == n.op);
        return out;
    }
    case 1: out.op = n.op == Op::log ? Op::exp : Op::log; return out;
    default: break;
    }
    if (n.op == Op::term) {
        do
            out.metric = kMetrics[rng.below(5)];
        while (out.metric == n.metric);
    } else {
        out.value = n.value * rng.uniform(0.9, 1.1);
    }
    return out;
}

inline bool evaluates_finitely(const std::vector<Node>& nodes)
{
    if (CostExpr::check(nodes))
        return false;
    std::size_t pos = 0;
    LeastEstimate const ones{1, 1, 1, 1, 1};
    return std::isfinite(eval_at(nodes, pos, ones, kUnitWeights));
}

} // namespace detail

inline constexpr int kMutationAttempts = 100;

/// Offspring gene: node rewrites and weight scalings, each with probability
/// m_c. Everything else is inherited unchanged.
inline Gene mutate(const Gene& parent, RandomSource& rng)
{
    Gene child = parent;
    std::vector<Node> nodes = parent.cost.nodes();
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (!rng.bernoulli(parent.m_c))
            continue;
        Node const original = nodes[k];
        bool accepted = false;
        for (int attempt = 0; attempt < kMutationAttempts && !accepted; ++attempt) {
            nodes[k] = detail::mutate_node(original, rng);
            accepted = detail::evaluates_finitely(nodes);
        }
        if (!accepted)
            nodes[k] = original;
    }
    child.cost = CostExpr(std::move(nodes));
    for (Metric m : kMetrics)
        if (rng.bernoulli(parent.m_c))
            child.weights[m] *= rng.uniform(0.9, 1.1);
    return child;
}

} // namespace qksa
