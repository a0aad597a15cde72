#pragma once

// Population orchestration: spawning from genes, round-robin scheduling,
// the global memory budget and lineage records.
//
// Run config keys (relative paths resolve against the config file):
//
//   population_cap = 8
//   step_budget    = 200
//   memory_budget  = 64        # sum of s_c over alive agents
//   master_seed    = 1
//   env_file       = x1q.cfg
//   gene_file      = seed.gene

#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qksa/agent.hpp"
#include "qksa/config.hpp"
#include "qksa/environment.hpp"
#include "qksa/metrics.hpp"
#include "qksa/random.hpp"

namespace qksa {

struct RunConfig
{
    Gene seed_gene;
    QuantumEnvConfig env;
    std::size_t population_cap = 1;
    long step_budget = 100;
    long memory_budget = 64;
    std::uint64_t master_seed = 0;
};

inline RunConfig parse_run_config(const KeyValueFile& file)
{
    file.require_known({"population_cap", "step_budget", "memory_budget", "master_seed", "env_file", "gene_file"});
    RunConfig config;
    auto positive = [&](const char* key) {
        long long const v = file.get_integer(key);
        if (v < 1)
            throw ConfigError(std::string(key) + " must be positive", file.source(), file.require(key).line);
        return v;
    };
    config.population_cap = static_cast<std::size_t>(positive("population_cap"));
    config.step_budget = static_cast<long>(positive("step_budget"));
    config.memory_budget = static_cast<long>(positive("memory_budget"));
    long long const seed = file.get_integer("master_seed");
    if (seed < 0)
        throw ConfigError("master_seed must be non-negative", file.source(), file.require("master_seed").line);
    config.master_seed = static_cast<std::uint64_t>(seed);
    config.env = load_env_config(file.get_path("env_file"));
    config.seed_gene = Gene::load(file.get_path("gene_file"));
    return config;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
    return parse_run_config(KeyValueFile::load(path));
}

struct LineageRecord
{
    std::uint64_t agent_id = 0;
    std::optional<std::uint64_t> parent_id;
    long birth_step = 0;
    std::optional<long> death_step;
    Gene gene;
    std::string strategy;
    double final_R = 0.0;
};

struct Rejection
{
    long step = 0;
    std::optional<std::uint64_t> parent_id;
    std::string reason;
    Gene gene;
};

struct SummaryRow
{
    long step = 0;
    std::size_t alive = 0;
    std::optional<double> best_R;
    std::optional<double> mean_c_est;
};

class Hypervisor
{
public:
    explicit Hypervisor(RunConfig config) : config_(std::move(config))
    {
        if (config_.population_cap < 1 || config_.step_budget < 0 || config_.memory_budget < 1)
            throw ConfigError("population cap and budgets must be positive");
        template_env_ = std::make_unique<QuantumEnvironment>(config_.env);
        spawn(config_.seed_gene, std::nullopt);
    }

    /// New agent at age 0 with its own environment copy; empty when the cap
    /// or memory budget would be exceeded (the attempt is logged).
    std::optional<std::uint64_t> spawn(const Gene& gene, std::optional<std::uint64_t> parent)
    {
        std::string reason;
        if (alive_count() >= config_.population_cap)
            reason = "population cap";
        else if (memory_in_use() + gene.s_c > config_.memory_budget)
            reason = "memory budget";
        if (!reason.empty()) {
            rejections_.push_back({step_, parent, reason, gene});
            return std::nullopt;
        }
        std::uint64_t const id = next_id_++;
        auto agent = std::make_unique<Agent>(id, gene, template_env_->clone_quantum(),
                                             mix_seed(config_.master_seed + id));
        lineage_.push_back({id, parent, step_, std::nullopt, gene, agent->strategy().descriptor(), agent->R_t()});
        agents_.push_back(std::move(agent));
        return id;
    }

    /// One cycle for every agent alive at the start of the step, in id order.
    void step()
    {
        std::vector<std::size_t> order;
        for (std::size_t k = 0; k < agents_.size(); ++k)
            if (agents_[k]->alive() && !retired(k))
                order.push_back(k);
        double c_sum = 0.0;
        std::size_t c_count = 0;
        for (std::size_t k : order) {
            Agent& agent = *agents_[k];
            auto outcome = agent.run_cycle();
            logs_[agent.id()].push_back(outcome.record);
            events_.push_back(outcome.record);
            if (std::isfinite(outcome.record.c_est_star)) {
                c_sum += outcome.record.c_est_star;
                ++c_count;
            }
            lineage_[k].final_R = agent.R_t();
            if (!agent.alive() || agent.expired())
                lineage_[k].death_step = step_;
            if (outcome.offspring)
                spawn(*outcome.offspring, agent.id());
        }
        SummaryRow row{step_, alive_count(), std::nullopt, std::nullopt};
        for (std::size_t k = 0; k < agents_.size(); ++k)
            if (agents_[k]->alive() && !retired(k))
                row.best_R = row.best_R ? std::max(*row.best_R, agents_[k]->R_t()) : agents_[k]->R_t();
        if (c_count > 0)
            row.mean_c_est = c_sum / static_cast<double>(c_count);
        summary_.push_back(row);
        ++step_;
    }

    /// Steps until the budget (or `steps`, when given) runs out or nobody is
    /// left alive.
    void run(std::optional<long> steps = std::nullopt)
    {
        long const budget = steps ? *steps : config_.step_budget;
        while (step_ < budget && alive_count() > 0)
            step();
    }

    std::size_t alive_count() const
    {
        std::size_t n = 0;
        for (std::size_t k = 0; k < agents_.size(); ++k)
            n += agents_[k]->alive() && !retired(k);
        return n;
    }

    long memory_in_use() const
    {
        long total = 0;
        for (std::size_t k = 0; k < agents_.size(); ++k)
            if (agents_[k]->alive() && !retired(k))
                total += agents_[k]->gene().s_c;
        return total;
    }

    long steps_done() const { return step_; }
    const RunConfig& config() const { return config_; }
    const std::vector<LineageRecord>& lineage() const { return lineage_; }
    const std::vector<CycleRecord>& events() const { return events_; }
    const std::vector<Rejection>& rejections() const { return rejections_; }
    const std::vector<SummaryRow>& summary() const { return summary_; }
    const std::vector<CycleRecord>& agent_log(std::uint64_t id) const
    {
        static const std::vector<CycleRecord> none;
        auto it = logs_.find(id);
        return it == logs_.end() ? none : it->second;
    }
    const Agent& agent(std::uint64_t id) const { return *agents_.at(static_cast<std::size_t>(id - 1)); }

    // -- serialization -----------------------------------------------------

    std::string lineage_csv() const
    {
        std::string out = "agent_id,parent_id,birth_step,death_step,strategy,final_R_t,gene_file\n";
        for (const auto& r : lineage_) {
            out += std::to_string(r.agent_id) + ',' + (r.parent_id ? std::to_string(*r.parent_id) : "-") + ',' +
                   std::to_string(r.birth_step) + ',' + (r.death_step ? std::to_string(*r.death_step) : "-") + ',' +
                   r.strategy + ',' + format_double(r.final_R) + ",genes/agent_" + std::to_string(r.agent_id) +
                   ".gene\n";
        }
        return out;
    }

    static std::string events_csv(const std::vector<CycleRecord>& records)
    {
        std::string out = std::string(kCycleCsvHeader) + "\n";
        for (const auto& r : records)
            out += format_cycle_csv(r) + "\n";
        return out;
    }

    std::string summary_csv() const
    {
        std::string out = "step,alive,best_R,mean_c_est\n";
        for (const auto& r : summary_)
            out += std::to_string(r.step) + ',' + std::to_string(r.alive) + ',' +
                   (r.best_R ? format_double(*r.best_R) : "") + ',' +
                   (r.mean_c_est ? format_double(*r.mean_c_est) : "") + "\n";
        return out;
    }

    std::string rejections_csv() const
    {
        std::string out = "step,parent_id,reason,gene_file\n";
        for (std::size_t k = 0; k < rejections_.size(); ++k) {
            const auto& r = rejections_[k];
            out += std::to_string(r.step) + ',' + (r.parent_id ? std::to_string(*r.parent_id) : "-") + ',' +
                   r.reason + ",genes/rejected_" + std::to_string(k + 1) + ".gene\n";
        }
        return out;
    }

    /// lineage.csv, events.csv, summary.csv, rejections.csv, agents/ and genes/.
    void write_outputs(const std::filesystem::path& dir) const
    {
        namespace fs = std::filesystem;
        fs::create_directories(dir / "agents");
        fs::create_directories(dir / "genes");
        write_file(dir / "lineage.csv", lineage_csv());
        write_file(dir / "events.csv", events_csv(events_));
        write_file(dir / "summary.csv", summary_csv());
        write_file(dir / "rejections.csv", rejections_csv());
        for (const auto& r : lineage_) {
            std::string const id = std::to_string(r.agent_id);
            write_file(dir / "agents" / ("agent_" + id + ".csv"), events_csv(agent_log(r.agent_id)));
            write_file(dir / "genes" / ("agent_" + id + ".gene"), r.gene.serialize());
        }
        for (std::size_t k = 0; k < rejections_.size(); ++k)
            write_file(dir / "genes" / ("rejected_" + std::to_string(k + 1) + ".gene"), rejections_[k].gene.serialize());
    }

    static void write_file(const std::filesystem::path& path, const std::string& text)
    {
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw std::runtime_error("cannot write " + path.string());
        out << text;
        if (!out)
            throw std::runtime_error("failed writing " + path.string());
    }

private:
    bool retired(std::size_t k) const { return lineage_[k].death_step.has_value(); }

    RunConfig config_;
    std::unique_ptr<QuantumEnvironment> template_env_;
    std::vector<std::unique_ptr<Agent>> agents_;
    std::vector<LineageRecord> lineage_;
    std::map<std::uint64_t, std::vector<CycleRecord>> logs_;
    std::vector<CycleRecord> events_;
    std::vector<Rejection> rejections_;
    std::vector<SummaryRow> summary_;
    std::uint64_t next_id_ = 1;
    long step_ = 0;
};

} // namespace qksa
