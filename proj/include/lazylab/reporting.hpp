#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "lazylab/lab.hpp"

namespace lazylab {

// Result persistence.  Every table is plain delimited text with %.17g floats
// and rows in sorted (m, seed) order; rerunning a config byte-reproduces the
// outputs for any worker count.  summary.json carries the config echo, its
// hash, the laziness exponent, and one record per cell.

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);  // binary: no platform newline surprises
    if (!f) throw std::runtime_error("cannot open output file " + p.string());
    return f;
}

}  // namespace detail

inline nlohmann::json config_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["L"] = cfg.L;
    j["d"] = cfg.d;
    j["n"] = cfg.n;
    j["activation"] = cfg.activation;
    j["gamma"] = cfg.gamma;
    j["m_list"] = cfg.m_list;
    j["seeds"] = cfg.seeds;
    j["dataset_seed"] = cfg.dataset_seed;
    j["c"] = cfg.c;
    j["delta_parallel"] = cfg.delta_parallel;
    j["dt_factor"] = cfg.dt_factor;
    j["T"] = cfg.T;
    j["record_every"] = cfg.record_every;
    j["monitor_every"] = cfg.monitor_every;
    j["slack"] = cfg.slack;
    j["loss_floor_rel"] = cfg.loss_floor_rel;
    j["integrator"] = cfg.integrator;
    j["quad_order"] = cfg.quad_order;
    j["use_kernel"] = cfg.use_kernel;
    j["laziness_exponent"] = cfg.laziness_exponent();
    j["config_hash"] = config_hash(cfg);
    return j;
}

inline void emit_sweep(const SweepResult& res, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const ExperimentConfig& cfg = res.config;

    {
        auto f = detail::open_out(fs::path(out_dir) / "sweep.csv");
        f << "m,seed,lambda_S,lambda_from_kernel,s,R0,final_loss";
        for (std::size_t l = 1; l <= cfg.L; ++l) f << ",sup_rd_W" << l;
        f << ",sup_rd_a,stopping_time,decay_bound_held,step_bound_held,max_p,wall_ms,error\n";
        for (const auto& cell : res.cells) {
            f << cell.m << ',' << cell.seed << ',' << detail::fmt_double(cell.lambda_S) << ','
              << (cell.lambda_from_kernel ? 1 : 0) << ','
              << detail::fmt_double(cfg.laziness_exponent()) << ','
              << detail::fmt_double(cell.initial_loss) << ','
              << detail::fmt_double(cell.final_loss);
            if (cell.sup_rd.empty())
                for (std::size_t b = 0; b <= cfg.L; ++b) f << ",nan";
            else
                for (double v : cell.sup_rd) f << ',' << detail::fmt_double(v);
            f << ',' << (cell.stopping_time ? detail::fmt_double(*cell.stopping_time) : "none")
              << ',' << (cell.decay_bound_held ? 1 : 0) << ',' << (cell.step_bound_held ? 1 : 0)
              << ',' << detail::fmt_double(cell.max_p) << ','
              << detail::fmt_double(cell.wall_ms) << ',' << cell.error << '\n';
        }
    }

    for (const auto& cell : res.cells) {
        if (!cell.error.empty()) continue;
        auto f = detail::open_out(fs::path(out_dir) / ("loss_m" + std::to_string(cell.m) +
                                                       "_s" + std::to_string(cell.seed) +
                                                       ".csv"));
        f << "t,loss\n";
        for (std::size_t r = 0; r < cell.trace.times.size(); ++r)
            f << detail::fmt_double(cell.trace.times[r]) << ','
              << detail::fmt_double(cell.trace.loss[r]) << '\n';
    }

    for (std::size_t b = 0; b <= cfg.L; ++b) {
        const std::string block = (b < cfg.L) ? ("W" + std::to_string(b + 1)) : "a";
        auto f = detail::open_out(fs::path(out_dir) / ("rd_vs_m_" + block + ".csv"));
        f << "m,median_sup_rd\n";
        for (const auto& [m, med] : res.median_sup_rd)
            f << m << ',' << detail::fmt_double(med[b]) << '\n';
    }

    nlohmann::json j;
    j["config"] = config_json(cfg);
    j["config_echo"] = config_echo(cfg);
    j["cells"] = nlohmann::json::array();
    for (const auto& cell : res.cells) {
        nlohmann::json c;
        c["m"] = cell.m;
        c["seed"] = cell.seed;
        c["lambda_S"] = cell.lambda_S;
        c["lambda_from_kernel"] = cell.lambda_from_kernel;
        c["s"] = cfg.laziness_exponent();
        c["R0"] = cell.initial_loss;
        c["final_loss"] = cell.final_loss;
        c["sup_rd"] = cell.sup_rd;
        if (cell.stopping_time) c["stopping_time"] = *cell.stopping_time;
        c["decay_bound_held"] = cell.decay_bound_held;
        c["step_bound_held"] = cell.step_bound_held;
        c["max_p"] = cell.max_p;
        c["error"] = cell.error;
        j["cells"].push_back(std::move(c));
    }
    {
        nlohmann::json med;
        for (const auto& [m, v] : res.median_sup_rd) med[std::to_string(m)] = v;
        j["median_sup_rd"] = std::move(med);
    }
    auto f = detail::open_out(fs::path(out_dir) / "summary.json");
    f << j.dump(2) << '\n';
}

inline void emit_concentration(const std::vector<ConcentrationRow>& rows,
                               const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto f = detail::open_out(fs::path(out_dir) / "concentration.csv");
    f << "m,layer,median_inf_error,iqr,floor_fraction,lambda_S,s\n";
    for (const auto& r : rows)
        f << r.m << ',' << r.layer << ',' << detail::fmt_double(r.median_inf_error) << ','
          << detail::fmt_double(r.iqr) << ',' << detail::fmt_double(r.floor_fraction) << ','
          << detail::fmt_double(r.lambda_S) << ','
          << detail::fmt_double(cfg.laziness_exponent()) << '\n';
    nlohmann::json j;
    j["config"] = config_json(cfg);
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json c;
        c["m"] = r.m;
        c["layer"] = r.layer;
        c["median_inf_error"] = r.median_inf_error;
        c["iqr"] = r.iqr;
        c["floor_fraction"] = r.floor_fraction;
        c["lambda_S"] = r.lambda_S;
        j["rows"].push_back(std::move(c));
    }
    auto g = detail::open_out(fs::path(out_dir) / "concentration.json");
    g << j.dump(2) << '\n';
}

inline void emit_phase(const std::vector<PhaseRow>& rows, const ExperimentConfig& cfg,
                       const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto f = detail::open_out(fs::path(out_dir) / "phase.csv");
    f << "s,gamma,m";
    for (std::size_t l = 1; l <= cfg.L; ++l) f << ",median_sup_rd_W" << l;
    f << ",median_sup_rd_a,lambda_S,monotone_checked,monotone_decrease,gated,error\n";
    for (const auto& r : rows) {
        f << detail::fmt_double(r.s) << ',';
        for (std::size_t k = 0; k < r.gamma.size(); ++k) {
            if (k) f << ' ';
            f << detail::fmt_double(r.gamma[k]);
        }
        f << ',' << r.m;
        if (r.median_sup_rd.empty())
            for (std::size_t b = 0; b <= cfg.L; ++b) f << ",nan";
        else
            for (double v : r.median_sup_rd) f << ',' << detail::fmt_double(v);
        // rows with s <= 0 are exploratory: reported, never gated
        f << ',' << detail::fmt_double(r.lambda_S) << ',' << (r.monotone_checked ? 1 : 0)
          << ',' << (r.monotone_decrease ? 1 : 0) << ',' << (r.s > 0.0 ? 1 : 0) << ','
          << r.error << '\n';
    }
}

inline void emit_init_bounds(const InitBoundsReport& rep, const ExperimentConfig& cfg,
                             const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto f = detail::open_out(fs::path(out_dir) / "init_bounds.csv");
    f << "bound,frequency\n";
    f << "a_norm," << detail::fmt_double(rep.freq_a_norm) << '\n';
    for (std::size_t l = 0; l < rep.freq_w_opnorm.size(); ++l)
        f << "W" << (l + 1) << "_opnorm," << detail::fmt_double(rep.freq_w_opnorm[l]) << '\n';
    f << "W1_frobenius," << detail::fmt_double(rep.freq_w1_frobenius) << '\n';
    for (std::size_t l = 0; l < rep.freq_w_frobenius.size(); ++l)
        f << "W" << (l + 2) << "_frobenius," << detail::fmt_double(rep.freq_w_frobenius[l])
          << '\n';
    nlohmann::json j;
    j["config"] = config_json(cfg);
    j["m"] = rep.m;
    j["d"] = rep.d;
    j["L"] = rep.L;
    j["seed_count"] = rep.seed_count;
    j["below_width_threshold"] = rep.below_width_threshold;
    j["freq_a_norm"] = rep.freq_a_norm;
    j["freq_w_opnorm"] = rep.freq_w_opnorm;
    j["freq_w1_frobenius"] = rep.freq_w1_frobenius;
    j["freq_w_frobenius"] = rep.freq_w_frobenius;
    j["min_a_norm"] = rep.min_a_norm;
    j["max_a_norm"] = rep.max_a_norm;
    j["min_w_opnorm"] = rep.min_w_opnorm;
    j["max_w_opnorm"] = rep.max_w_opnorm;
    auto g = detail::open_out(fs::path(out_dir) / "init_bounds.json");
    g << j.dump(2) << '\n';
}

}  // namespace lazylab
