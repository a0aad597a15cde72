#pragma once

// The agent's decision loop: lookahead over action/percept continuations,
// self-assigned reward from prediction error, linearly discounted return and
// the death and replication thresholds.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qksa/environment.hpp"
#include "qksa/metrics.hpp"
#include "qksa/random.hpp"
#include "qksa/tomography.hpp"
#include "qksa/trace.hpp"

namespace qksa {

class AgentError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Hamming distance between equal-width percepts.
inline double delta(const Percept& e, const Percept& p)
{
    if (e.size() != p.size())
        throw AgentError("percepts '" + e + "' and '" + p + "' differ in width");
    double d = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k)
        d += e[k] != p[k] ? 1.0 : 0.0;
    return d;
}

inline double reward(const Percept& e, const Percept& prediction) { return 0.0 - delta(e, prediction); }

/// sum over the last min(t_p, len) rewards, newest first, of r * (1 - gamma * i).
inline double ret(const std::vector<double>& hist_r, int t_p, double gamma)
{
    double total = 0.0;
    std::size_t const len = hist_r.size();
    std::size_t const span = std::min(len, static_cast<std::size_t>(std::max(t_p, 0)));
    for (std::size_t i = 0; i < span; ++i)
        total += hist_r[len - 1 - i] * (1.0 - gamma * static_cast<double>(i));
    return total;
}

// ---------------------------------------------------------------------------
// lookahead

struct FutureConeResult
{
    std::optional<std::size_t> action;  ///< empty when no leaf was admissible
    double cost = std::numeric_limits<double>::infinity();
    std::size_t leaves = 0;
};

/// Leaf cost for a continuation of `actions[k]`, `percepts[k]`; empty when the
/// leaf breaks the resource bounds.
using LeafCost = std::function<std::optional<double>(const std::vector<std::size_t>& actions,
                                                     const std::vector<std::size_t>& percepts)>;

/// Depth-first over a0, e0, a1, e1, ... in index order. A leaf is admitted
/// when 0 < cost < best so far, so ties keep the earliest leaf.
inline FutureConeResult future_cone(std::size_t n_actions, std::size_t n_percepts, int horizon,
                                    const LeafCost& leaf_cost)
{
    if (horizon < 1)
        throw AgentError("lookahead horizon must be at least 1");
    if (n_actions == 0 || n_percepts == 0)
        throw AgentError("action and percept spaces must be non-empty");
    FutureConeResult best;
    std::vector<std::size_t> actions, percepts;
    auto recurse = [&](auto& self, int depth) -> void {
        if (depth == horizon) {
            ++best.leaves;
            auto const cost = leaf_cost(actions, percepts);
            if (cost && *cost > 0.0 && *cost < best.cost) {
                best.cost = *cost;
                best.action = actions.front();
            }
            return;
        }
        for (std::size_t a = 0; a < n_actions; ++a) {
            actions.push_back(a);
            for (std::size_t e = 0; e < n_percepts; ++e) {
                percepts.push_back(e);
                self(self, depth + 1);
                percepts.pop_back();
            }
            actions.pop_back();
        }
    };
    recurse(recurse, 0);
    return best;
}

// ---------------------------------------------------------------------------
// strategy selection

inline constexpr long kStrategyShots[] = {10, 100, 1000};

/// Resource footprint of one full reconstruction pass, measured by running
/// the reconstruction on synthetic exact data. The approximation slot is the
/// shot-noise scale 1/sqrt(shots).
inline ExecutionTrace projected_trace(const QPTStrategy& strategy, int n_qubits)
{
    QuantumEnvironment synthetic(QuantumChannel::depolarizing(n_qubits, 1.0), true);
    auto const budget = make_budget(strategy.method, n_qubits, kExactShots);
    RandomSource unused(0);
    auto const records = collect_all(synthetic, budget, unused);
    ExecutionTrace trace;
    long const shots = strategy.shots == kExactShots ? 1 : strategy.shots;
    trace.count_measurements(static_cast<std::uint64_t>(shots) * budget.settings_count());
    trace.note_cells(std::uint64_t{1} << budget.settings.front().basis.n_qubits());
    reconstruct_process(strategy.method, n_qubits, records, &trace);
    trace.deviations.push_back(1.0 / std::sqrt(static_cast<double>(shots)));
    return trace;
}

/// Cheapest admissible strategy under the gene's cost; the cheapest overall
/// when none fits the bounds.
inline QPTStrategy choose_strategy(const Gene& gene, int n_qubits, bool entangled_available)
{
    std::vector<QPTStrategy> pool;
    for (Method m : {Method::sqpt, Method::eapt}) {
        if (m == Method::eapt && !entangled_available)
            continue;
        for (long shots : kStrategyShots)
            pool.push_back({m, shots});
    }
    std::optional<QPTStrategy> best_fit, best_any;
    double fit_cost = std::numeric_limits<double>::infinity();
    double any_cost = fit_cost;
    for (const auto& s : pool) {
        auto const est = estimate_least(s, projected_trace(s, n_qubits));
        double const c = eval_cost(gene.cost, est, gene.weights);
        if (c < any_cost) {
            any_cost = c;
            best_any = s;
        }
        if (within_bounds(est, gene.bounds) && c > 0.0 && c < fit_cost) {
            fit_cost = c;
            best_fit = s;
        }
    }
    return best_fit ? *best_fit : *best_any;
}

// ---------------------------------------------------------------------------
// agent

enum class AgentEvent { none, replicate, die, starved };

inline const char* to_string(AgentEvent e)
{
    switch (e) {
    case AgentEvent::none: return "none";
    case AgentEvent::replicate: return "replicate";
    case AgentEvent::die: return "die";
    case AgentEvent::starved: return "starved";
    }
    return "?";
}

/// One row of the event log. A death row carries no action or percept.
struct CycleRecord
{
    std::uint64_t agent_id = 0;
    long t = 0;
    std::string action;
    Percept prediction;
    Percept percept;
    std::optional<double> r_t;
    double R_t = 0.0;
    double c_est_star = std::numeric_limits<double>::infinity();
    AgentEvent event = AgentEvent::none;
};

inline constexpr const char* kCycleCsvHeader = "agent_id,t,action,prediction,percept,r_t,R_t,c_est_star,event";

inline std::string format_cycle_csv(const CycleRecord& r)
{
    std::string out = std::to_string(r.agent_id) + ',' + std::to_string(r.t) + ',' + r.action + ',' + r.prediction +
                      ',' + r.percept + ',' + (r.r_t ? format_double(*r.r_t) : std::string()) + ',' +
                      format_double(r.R_t) + ',' + format_double(r.c_est_star) + ',' + to_string(r.event);
    return out;
}

struct CycleOutcome
{
    CycleRecord record;
    std::optional<Gene> offspring;
};

enum class AgentStatus { alive, dead };

struct AgentOptions
{
    std::optional<QPTStrategy> strategy;  ///< default: choose_strategy
    std::optional<QuantumChannel> model;  ///< default: fully depolarizing
};

class Agent
{
public:
    Agent(std::uint64_t id, Gene gene, std::unique_ptr<QuantumEnvironment> env, std::uint64_t seed,
          AgentOptions options = {})
        : id_(id), gene_(std::move(gene)), env_(std::move(env)), rng_(seed),
          model_(options.model ? *options.model : QuantumChannel::depolarizing(env_->n_qubits(), 1.0)),
          R_t_(gene_.R_R)
    {
        if (auto problem = gene_.validate())
            throw AgentError("invalid gene: " + *problem);
        if (model_.n_qubits() != env_->n_qubits())
            throw AgentError("model and environment act on different qubit counts");
        strategy_ = options.strategy ? *options.strategy
                                     : choose_strategy(gene_, env_->n_qubits(), env_->entangled_mode());
        if (strategy_.method == Method::qst)
            throw AgentError("the agent models processes; state tomography is not a strategy");
        if (strategy_.method == Method::eapt && !env_->entangled_mode())
            throw AgentError("strategy needs an entangled-mode environment");
        budget_ = make_budget(strategy_.method, env_->n_qubits(), strategy_.shots);
        strategy_trace_ = projected_trace(strategy_, env_->n_qubits());
        strategy_trace_.deviations.clear();
        for (std::size_t e = 0; e < env_->percept_count(); ++e)
            percepts_.push_back(outcome_bits(e, env_->n_qubits()));
    }

    std::uint64_t id() const { return id_; }
    const Gene& gene() const { return gene_; }
    const QPTStrategy& strategy() const { return strategy_; }
    const QuantumChannel& model() const { return model_; }
    QuantumEnvironment& environment() { return *env_; }
    AgentStatus status() const { return status_; }
    bool alive() const { return status_ == AgentStatus::alive; }
    long t() const { return t_; }
    bool expired() const { return t_ >= gene_.lifespan; }
    double R_t() const { return R_t_; }
    const std::vector<double>& rewards() const { return hist_r_; }
    const std::vector<std::size_t>& actions() const { return hist_a_; }
    const std::vector<Percept>& percepts() const { return hist_e_; }
    const std::vector<Percept>& predictions() const { return hist_rho_; }

    /// Replace the current model and restart the tomography schedule.
    void set_model(QuantumChannel model)
    {
        if (model.n_qubits() != env_->n_qubits())
            throw AgentError("model acts on the wrong number of qubits");
        model_ = std::move(model);
        predictions_.clear();
        records_.clear();
        pass_trace_ = {};
    }

    /// Chosen action and its cost for the current history, without acting.
    FutureConeResult plan()
    {
        refresh_predictions();
        std::size_t const n_actions = env_->action_count();
        std::size_t const n_percepts = percepts_.size();
        // expected mismatch of hypothesized percept e against the model's
        // outcome distribution for action a
        std::vector<double> expected(n_actions * n_percepts, 0.0);
        for (std::size_t a = 0; a < n_actions; ++a)
            for (std::size_t e = 0; e < n_percepts; ++e) {
                double d = 0.0;
                const auto& probs = predictions_[a].probabilities;
                for (std::size_t b = 0; b < probs.size(); ++b)
                    d += probs[b] * delta(percepts_[b], percepts_[e]);
                expected[a * n_percepts + e] = d;
            }
        double window_sum = 0.0;
        std::size_t const len = hist_dev_.size();
        std::size_t const span = std::min(len, static_cast<std::size_t>(gene_.t_p));
        for (std::size_t i = 0; i < span; ++i)
            window_sum += hist_dev_[len - 1 - i];

        LeastEstimate const base_est = estimate_least(strategy_, strategy_trace_);
        double const steps = static_cast<double>(gene_.t_f);

        return future_cone(n_actions, n_percepts, gene_.t_f,
                           [&](const std::vector<std::size_t>& acts, const std::vector<std::size_t>& percs)
                               -> std::optional<double> {
                               double sum = window_sum;
                               for (std::size_t k = 0; k < acts.size(); ++k)
                                   sum += expected[acts[k] * n_percepts + percs[k]];
                               LeastEstimate est = base_est;
                               est.a = sum / static_cast<double>(span + acts.size());
                               est.e += steps;
                               est.t += steps;
                               if (!within_bounds(est, gene_.bounds))
                                   return std::nullopt;
                               return eval_cost(gene_.cost, est, gene_.weights);
                           });
    }

    /// One pass of the loop body. Requires an alive agent within its lifespan.
    CycleOutcome run_cycle()
    {
        if (!alive())
            throw AgentError("dead agents take no further steps");
        if (expired())
            throw AgentError("agent has reached its lifespan");
        CycleOutcome out;
        CycleRecord& rec = out.record;
        rec.agent_id = id_;
        rec.t = t_;

        if (R_t_ < gene_.R_D) {
            status_ = AgentStatus::dead;
            rec.R_t = R_t_;
            rec.event = AgentEvent::die;
            return out;
        }

        auto const choice = plan();
        std::size_t const action = choice.action ? *choice.action : static_cast<std::size_t>(t_) % env_->action_count();
        rec.c_est_star = choice.cost;
        rec.action = env_->encode_action(action);

        Percept const predicted = predictions_[action].bits;
        Percept const perceived = env_->step(action, rng_);
        double const d = delta(perceived, predicted);
        double const r = 0.0 - d;

        hist_a_.push_back(action);
        hist_rho_.push_back(predicted);
        hist_e_.push_back(perceived);
        hist_r_.push_back(r);
        hist_dev_.push_back(d);
        R_t_ = ret(hist_r_, gene_.t_p, gene_.gamma);

        rec.prediction = predicted;
        rec.percept = perceived;
        rec.r_t = r;
        rec.R_t = R_t_;
        if (R_t_ >= gene_.R_D && R_t_ < gene_.R_R) {
            rec.event = AgentEvent::replicate;
            out.offspring = mutate(gene_, rng_);
        } else if (!choice.action) {
            rec.event = AgentEvent::starved;
        }

        refresh_model();
        ++t_;
        return out;
    }

private:
    void refresh_predictions()
    {
        if (!predictions_.empty())
            return;
        predictions_.reserve(env_->action_count());
        for (std::size_t a = 0; a < env_->action_count(); ++a)
            predictions_.push_back(predict(model_, env_->action(a)));
    }

    /// Run the next scheduled setting; rebuild the model after a full pass.
    void refresh_model()
    {
        const Setting& s = budget_.settings[records_.size()];
        records_.push_back(collect_setting(*env_, strategy_.method, s, strategy_.shots, rng_, &pass_trace_));
        if (records_.size() < budget_.settings.size())
            return;
        try {
            model_ = reconstruct_process(strategy_.method, env_->n_qubits(), records_, &pass_trace_);
        } catch (const std::runtime_error&) {
            // keep the previous model; the pass is discarded
        }
        strategy_trace_ = pass_trace_;
        strategy_trace_.deviations.clear();
        predictions_.clear();
        records_.clear();
        pass_trace_ = {};
    }

    std::uint64_t id_;
    Gene gene_;
    std::unique_ptr<QuantumEnvironment> env_;
    RandomSource rng_;
    QuantumChannel model_;
    QPTStrategy strategy_;
    ReconstructionBudget budget_;
    ExecutionTrace strategy_trace_;
    ExecutionTrace pass_trace_;
    std::vector<SettingRecord> records_;
    std::vector<Prediction> predictions_;
    std::vector<Percept> percepts_;

    std::vector<std::size_t> hist_a_;
    std::vector<Percept> hist_e_;
    std::vector<Percept> hist_rho_;
    std::vector<double> hist_r_;
    std::vector<double> hist_dev_;
    long t_ = 0;
    double R_t_;
    AgentStatus status_ = AgentStatus::alive;
};

} // namespace qksa
