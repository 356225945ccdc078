#pragma once

// Command-line front end. dispatch() returns the process exit status:
// 0 success, 1 infeasible, 2 invalid input or usage.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drvcg/allocation.hpp"
#include "drvcg/io.hpp"
#include "drvcg/mechanisms.hpp"
#include "drvcg/reliability.hpp"
#include "drvcg/simulate.hpp"

namespace drvcg::cli {

using io::json;

namespace detail {

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open input file " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidInput(path + ": " + e.what());
    }
}

inline void emit(const std::string& text, const std::string& output, std::ostream& out) {
    if (output.empty()) {
        out << text;
        return;
    }
    std::ofstream f(output, std::ios::binary);
    if (!f) throw InvalidInput("cannot open output file " + output);
    f << text;
}

/// "a.b.c=value": value is parsed as JSON when possible, else taken as a string.
inline void apply_override(json& doc, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidInput("override must look like key=value: " + kv);
    std::string pointer = "/" + kv.substr(0, eq);
    for (auto& c : pointer)
        if (c == '.') c = '/';
    const std::string raw = kv.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    doc[json::json_pointer(pointer)] = value;
}

inline unsigned thread_count() {
    if (const char* env = std::getenv("DRVCG_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw InvalidInput("DRVCG_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return 1;
}

inline double target_from(const json& doc, const std::optional<double>& flag, const char* key) {
    if (flag) return *flag;
    if (doc.contains(key) && doc.at(key).is_number()) return doc.at(key).get<double>();
    throw InvalidInput(std::string("no target: pass --target or set '") + key + "' in the input");
}

inline double gamma_from(const json& doc, const std::optional<double>& flag) {
    if (flag) return *flag;
    if (doc.contains("gamma") && doc.at("gamma").is_number()) return doc.at("gamma").get<double>();
    return 1.0;
}

}  // namespace detail

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"DR-VCG and DR-SCE demand-response mechanisms"};
    app.require_subcommand(1);

    std::string input, output, format = "json", summary;
    std::optional<double> target, gamma;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> mc_samples;
    std::size_t order_samples = 16;
    bool exact = false, expected = false;
    double grid = 1.0;
    std::string table;
    std::vector<std::string> overrides;

    auto* solve = app.add_subcommand("solve", "optimal contract set and rewards for a bid matrix");
    auto* vcg = app.add_subcommand("vcg", "run DR-VCG on agents, contracts and a reserve");
    auto* sce = app.add_subcommand("sce", "run DR-SCE on agents and a reserve");
    auto* rel = app.add_subcommand("reliability", "probability that a selection meets a goal");
    auto* sim = app.add_subcommand("simulate", "run a scenario and write the result table as CSV");
    auto* rep = app.add_subcommand("reproduce", "print a worked table as CSV");
    auto* ver = app.add_subcommand("verify", "check that the selection clears the market at cost-independent prices");

    for (auto* sub : {solve, vcg, sce, rel, sim, ver}) sub->add_option("--input", input, "input JSON file")->required();
    for (auto* sub : {solve, vcg, sce, rel, sim, rep, ver}) {
        sub->add_option("--output", output, "output file (default: standard output)");
        sub->add_option("--seed", seed, "random seed (default 0)");
    }
    for (auto* sub : {solve, vcg, sce, rel, ver}) sub->add_option("--target", target, "reduction goal in kWh");
    for (auto* sub : {vcg, sce}) sub->add_option("--gamma", gamma, "safety margin (>= 1)");
    solve->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    sce->add_flag("--expected", expected, "average over selection orders");
    sce->add_option("--samples", order_samples, "sampled orders when there are too many to enumerate");
    auto* exact_flag = rel->add_flag("--exact", exact, "exact convolution (default)");
    rel->add_option("--mc,--samples", mc_samples, "Monte Carlo with this many samples")->excludes(exact_flag);
    rel->add_option("--grid", grid, "convolution resolution in kWh");
    sim->add_option("--set", overrides, "override a scenario field, e.g. population.n=50");
    sim->add_option("--summary", summary, "also write a JSON summary here");
    rep->add_option("--table", table, "1, 2 or example1")->required()->check(CLI::IsMember({"1", "2", "example1"}));

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;
        if (*solve || *ver) {
            const json doc = detail::read_json(input);
            const BidMatrix b = io::bid_matrix_from_json(doc);
            const int units = to_units(detail::target_from(doc, target, "target"), b.unit, "target");
            err << "seed: " << seed << "\n";
            if (*ver) {
                const auto report = verify_market_clearing(b, units);
                json v = json::array();
                for (const auto& x : report.violations) v.push_back({{"agent", x.agent}, {"message", x.message}});
                detail::emit(json{{"ok", report.ok()}, {"violations", v}}.dump(2) + "\n", output, out);
                return 0;
            }
            const AllocationTables t(b, units);
            const Solution s = t.solution(b);
            const RewardVector r = clarke_rewards_fast(t, s, b.agents.size());
            if (format == "csv") {
                std::string csv = "agent_id,contract_ell,bid,reward\n";
                for (const auto& p : s.assignment.pairs)
                    csv += b.agents[p.agent].id + "," + format_number(p.units * b.unit) + "," + format_number(p.bid) +
                           "," + format_number(r[p.agent]) + "\n";
                if (s.assignment.reserve_units > 0)
                    csv += "reserve," + format_number(s.assignment.reserve_units * b.unit) + "," +
                           format_number(s.assignment.reserve_cost) + ",0\n";
                detail::emit(csv, output, out);
            } else {
                detail::emit(io::to_json(b, s, r).dump(2) + "\n", output, out);
            }
            return 0;
        }
        if (*vcg) {
            const json doc = detail::read_json(input);
            const auto agents = io::agents_from_json(doc);
            const auto contracts = io::contracts_from_json(doc);
            const double unit = doc.contains("unit") ? doc.at("unit").get<double>()
                                : doc.contains("contract_grid") ? doc.at("contract_grid").at("step").get<double>()
                                                                : 1.0;
            err << "seed: " << seed << "\n";
            const auto o = run_dr_vcg(agents, contracts, io::optional_reserve(doc), detail::target_from(doc, target, "M"),
                                      detail::gamma_from(doc, gamma), unit);
            detail::emit(io::to_json(o).dump(2) + "\n", output, out);
            return 0;
        }
        if (*sce) {
            const json doc = detail::read_json(input);
            const SceMarket m = make_sce_market(io::agents_from_json(doc), io::optional_reserve(doc));
            const double M = detail::target_from(doc, target, "M");
            const double g = detail::gamma_from(doc, gamma);
            err << "seed: " << seed << "\n";
            if (expected) {
                const auto ex = expected_dr_sce(m, M, g, {8, order_samples, seed});
                detail::emit(io::to_json(ex).dump(2) + "\n", output, out);
                return 0;
            }
            MechanismOutcome o;
            if (doc.contains("order")) {
                std::vector<std::size_t> order;
                for (const auto& i : doc.at("order")) order.push_back(i.get<std::size_t>());
                o = run_dr_sce(m, M, g, order);
            } else {
                Rng rng(seed);
                o = run_dr_sce(m, M, g, rng);
            }
            detail::emit(io::to_json(o).dump(2) + "\n", output, out);
            return 0;
        }
        if (*rel) {
            const json doc = detail::read_json(input);
            const auto sel = io::selection_from_json(doc);
            const double m = target ? *target : sel.m ? *sel.m : throw InvalidInput("no goal: pass --target or set 'm'");
            err << "seed: " << seed << "\n";
            const ReliabilityResult r = mc_samples ? success_prob_mc(sel.outcomes, sel.reserve_quantity, m, *mc_samples, seed)
                                                   : success_prob_exact(sel.outcomes, sel.reserve_quantity, m, grid);
            json j{{"m", m},
                   {"reserve_quantity", sel.reserve_quantity},
                   {"probability", r.probability},
                   {"method", r.method == ReliabilityResult::Method::exact ? "exact" : "monte_carlo"}};
            if (mc_samples) {
                j["samples"] = r.samples;
                j["half_width_95"] = r.half_width_95;
                j["seed"] = seed;
            }
            detail::emit(j.dump(2) + "\n", output, out);
            return 0;
        }
        if (*sim) {
            json doc = detail::read_json(input);
            for (const auto& kv : overrides) detail::apply_override(doc, kv);
            Scenario s = io::scenario_from_json(doc);
            if (seed_given) s.master_seed = seed;
            err << "seed: " << s.master_seed << "\n";
            const ResultTable t = run_scenario(s, detail::thread_count());
            detail::emit(to_csv(t), output, out);
            if (!summary.empty()) {
                const json j{{"scenario", io::to_json(s)}, {"results", io::to_json(t)}};
                detail::emit(j.dump(2) + "\n", summary, out);
            }
            return 0;
        }
        if (*rep) {
            err << "seed: " << seed << "\n";
            if (table == "example1") detail::emit(example_one_csv(reproduce_example_one()), output, out);
            else if (table == "1") detail::emit(table1_csv(reproduce_appendix_tables()), output, out);
            else detail::emit(table2_csv(reproduce_appendix_tables()), output, out);
            return 0;
        }
    } catch (const Infeasible& e) {
        err << "infeasible: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

inline int dispatch(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args, out, err);
}

}  // namespace drvcg::cli
