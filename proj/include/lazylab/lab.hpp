#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "lazylab/gradflow.hpp"
#include "lazylab/gram.hpp"
#include "lazylab/kernel.hpp"
#include "lazylab/linalg.hpp"
#include "lazylab/network.hpp"

namespace lazylab {

// ---------------------------------------------------------------------------
// Experiment configuration.  Parsed from `key = value` text files; lists are
// comma-separated, gamma grids semicolon-separated vectors.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::size_t L = 2;
    std::size_t d = 6;
    std::size_t n = 4;
    std::string activation = "scaled_silu";
    std::vector<double> gamma = {0.5, 0.5, 0.0};
    std::vector<std::size_t> m_list = {128, 512, 2048};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::uint64_t dataset_seed = 42;
    double c = 1.0;
    double delta_parallel = 0.01;

    double dt_factor = 0.1;   // dt = dt_factor * n / (rate_sum * lambda_hat)
    double T = 1e9;
    std::size_t record_every = 1;
    std::size_t monitor_every = 1;
    double slack = 1e-3;
    double loss_floor_rel = 1e-8;
    std::string integrator = "euler";

    std::size_t quad_order = 80;
    bool use_kernel = true;  // lambda_S from limiting kernels; fallback uses Gram floor
    std::size_t workers = 1;
    std::string out_dir;

    std::vector<std::vector<double>> gamma_grid;  // phase-scan rows

    double laziness_exponent() const {
        double gsum = 0.0;
        for (double g : gamma) gsum += g;
        return 0.5 * static_cast<double>(L + 1) - gsum;
    }
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
    }
    return out;
}

inline std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& t : split(s, ','))
        if (!t.empty()) out.push_back(std::stod(t));
    return out;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(std::istream& is) {
    ExperimentConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
        };
        trim(key);
        trim(val);
        if (key.empty() || val.empty()) continue;
        try {
            if (key == "L") cfg.L = std::stoul(val);
            else if (key == "d") cfg.d = std::stoul(val);
            else if (key == "n") cfg.n = std::stoul(val);
            else if (key == "activation") cfg.activation = val;
            else if (key == "gamma") cfg.gamma = detail::parse_doubles(val);
            else if (key == "m_list") {
                cfg.m_list.clear();
                for (const auto& t : detail::split(val, ','))
                    if (!t.empty()) cfg.m_list.push_back(std::stoul(t));
            } else if (key == "seeds") {
                cfg.seeds.clear();
                for (const auto& t : detail::split(val, ','))
                    if (!t.empty()) cfg.seeds.push_back(std::stoull(t));
            } else if (key == "seed_count") {
                cfg.seeds.clear();
                for (std::uint64_t i = 0; i < std::stoull(val); ++i) cfg.seeds.push_back(i);
            } else if (key == "dataset_seed") cfg.dataset_seed = std::stoull(val);
            else if (key == "c") cfg.c = std::stod(val);
            else if (key == "delta_parallel") cfg.delta_parallel = std::stod(val);
            else if (key == "dt_factor") cfg.dt_factor = std::stod(val);
            else if (key == "T") cfg.T = std::stod(val);
            else if (key == "record_every") cfg.record_every = std::stoul(val);
            else if (key == "monitor_every") cfg.monitor_every = std::stoul(val);
            else if (key == "slack") cfg.slack = std::stod(val);
            else if (key == "loss_floor_rel") cfg.loss_floor_rel = std::stod(val);
            else if (key == "integrator") cfg.integrator = val;
            else if (key == "quad_order") cfg.quad_order = std::stoul(val);
            else if (key == "use_kernel") cfg.use_kernel = (val == "1" || val == "true");
            else if (key == "workers") cfg.workers = std::stoul(val);
            else if (key == "out_dir") cfg.out_dir = val;
            else if (key == "gamma_grid") {
                cfg.gamma_grid.clear();
                for (const auto& row : detail::split(val, ';'))
                    if (!row.empty()) cfg.gamma_grid.push_back(detail::parse_doubles(row));
            } else {
                throw std::runtime_error("unknown key '" + key + "'");
            }
        } catch (const std::exception& ex) {
            throw std::runtime_error("config line " + std::to_string(lineno) + ": " +
                                     ex.what());
        }
    }
    if (cfg.gamma.size() != cfg.L + 1)
        throw std::runtime_error("config: gamma must have L+1 entries");
    if (!std::is_sorted(cfg.m_list.begin(), cfg.m_list.end()))
        throw std::runtime_error("config: m_list must be ascending");
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    return parse_config_text(f);
}

// Canonical textual echo of a config; hashed into outputs so a result file
// can be traced to the exact configuration that produced it.
inline std::string config_echo(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "L=" << cfg.L << ";d=" << cfg.d << ";n=" << cfg.n << ";activation=" << cfg.activation
       << ";gamma=";
    for (double g : cfg.gamma) os << detail::fmt_double(g) << ',';
    os << ";m_list=";
    for (auto m : cfg.m_list) os << m << ',';
    os << ";seeds=";
    for (auto s : cfg.seeds) os << s << ',';
    os << ";dataset_seed=" << cfg.dataset_seed << ";c=" << detail::fmt_double(cfg.c)
       << ";delta_parallel=" << detail::fmt_double(cfg.delta_parallel)
       << ";dt_factor=" << detail::fmt_double(cfg.dt_factor) << ";T=" << detail::fmt_double(cfg.T)
       << ";record_every=" << cfg.record_every << ";monitor_every=" << cfg.monitor_every
       << ";slack=" << detail::fmt_double(cfg.slack)
       << ";loss_floor_rel=" << detail::fmt_double(cfg.loss_floor_rel)
       << ";integrator=" << cfg.integrator << ";quad_order=" << cfg.quad_order
       << ";use_kernel=" << (cfg.use_kernel ? 1 : 0);
    os << ";gamma_grid=";
    for (const auto& row : cfg.gamma_grid) {
        for (double g : row) os << detail::fmt_double(g) << ',';
        os << ';';
    }
    return os.str();
}

inline std::string config_hash(const ExperimentConfig& cfg) {
    const std::uint64_t h = detail::hash_tag(config_echo(cfg));
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Deterministic task pool: cells are scheduled by atomic index and write into
// pre-allocated slots, so results are identical for any worker count.
// ---------------------------------------------------------------------------

inline void run_parallel(std::size_t task_count, std::size_t workers,
                         const std::function<void(std::size_t)>& task) {
    workers = std::max<std::size_t>(1, std::min(workers, task_count));
    if (workers == 1) {
        for (std::size_t i = 0; i < task_count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= task_count) return;
                    task(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Lazy-regime training sweep.
// ---------------------------------------------------------------------------

struct SweepCell {
    std::size_t m = 0;
    std::uint64_t seed = 0;
    double lambda_S = 0.0;
    bool lambda_from_kernel = true;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> sup_rd;  // L+1: W1..WL, a
    std::optional<double> stopping_time;
    bool decay_bound_held = true;
    bool step_bound_held = true;
    double max_p = 0.0;
    double wall_ms = 0.0;
    std::string error;  // empty when the cell succeeded
    TrainTrace trace;
};

struct SweepResult {
    ExperimentConfig config;
    Dataset dataset;
    std::vector<SweepCell> cells;  // sorted by (m, seed)
    // medians over seeds of sup RD, per m, per block (W1..WL, a)
    std::map<std::size_t, std::vector<double>> median_sup_rd;
};

namespace detail {

inline double median_of(std::vector<double> v) { return percentile(std::move(v), 0.5); }

// lambda_S for a width: limiting kernels when enabled, otherwise the least
// eigenvalue floor of the initialization-time normalized Gram stack (labeled,
// because the two agree only up to the concentration error).
inline std::pair<double, bool> lambda_for_width(const Dataset& data,
                                                const ScalingConfig& scal,
                                                const Activation& act,
                                                const ExperimentConfig& cfg) {
    if (cfg.use_kernel) {
        KernelOptions kopt;
        kopt.order = cfg.quad_order;
        KernelStack ks = limiting_kernels(data, scal, act, kopt);
        return {ks.lambda_S, true};
    }
    Params p = init_params(scal, cfg.seeds.empty() ? 0 : cfg.seeds.front());
    NormalizedParams np = normalize_params(p, scal);
    GramStack gs = gram_normalized_only(np, data, scal, act);
    double floor = std::numeric_limits<double>::infinity();
    for (double e : gs.min_eigs) floor = std::min(floor, e);
    return {floor, false};
}

}  // namespace detail

inline SweepResult run_lazy_suite(const ExperimentConfig& cfg) {
    const Activation act = activation_by_name(cfg.activation);
    SweepResult result;
    result.config = cfg;
    result.dataset = generate_dataset(cfg.n, cfg.d, cfg.c, cfg.delta_parallel,
                                      cfg.dataset_seed);

    struct WidthInfo {
        ScalingConfig scal;
        double lambda_S = 0.0;
        bool from_kernel = true;
    };
    std::vector<WidthInfo> widths;
    for (std::size_t m : cfg.m_list) {
        WidthInfo wi;
        wi.scal = make_scaling(cfg.L, m, cfg.d, cfg.gamma);
        auto [lam, from_kernel] = detail::lambda_for_width(result.dataset, wi.scal, act, cfg);
        wi.lambda_S = lam;
        wi.from_kernel = from_kernel;
        widths.push_back(std::move(wi));
    }

    const std::size_t cells = cfg.m_list.size() * cfg.seeds.size();
    result.cells.resize(cells);
    run_parallel(cells, cfg.workers, [&](std::size_t idx) {
        const std::size_t mi = idx / cfg.seeds.size();
        const std::size_t si = idx % cfg.seeds.size();
        const WidthInfo& wi = widths[mi];
        SweepCell& cell = result.cells[idx];
        cell.m = cfg.m_list[mi];
        cell.seed = cfg.seeds[si];
        cell.lambda_S = wi.lambda_S;
        cell.lambda_from_kernel = wi.from_kernel;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            Params p0 = init_params(wi.scal, cell.seed);
            FlowOptions opt;
            opt.lambda_hat = wi.lambda_S;
            opt.dt = cfg.dt_factor * static_cast<double>(cfg.n) /
                     (wi.scal.rate_sum() * wi.lambda_S);
            opt.T = cfg.T;
            opt.record_every = cfg.record_every;
            opt.monitor_every = cfg.monitor_every;
            opt.slack = cfg.slack;
            opt.loss_floor_rel = cfg.loss_floor_rel;
            opt.integrator = (cfg.integrator == "rk4") ? Integrator::Rk4 : Integrator::Euler;
            TrainTrace tr = integrate_flow(p0, result.dataset, act, wi.scal, opt);
            cell.initial_loss = tr.initial_loss;
            cell.final_loss = tr.final_loss;
            cell.stopping_time = tr.stopping_time;
            cell.decay_bound_held = !tr.decay_bound_violated;
            cell.step_bound_held = !tr.step_bound_violated;
            cell.sup_rd.assign(cfg.L + 1, 0.0);
            for (const auto& row : tr.rd)
                for (std::size_t b = 0; b <= cfg.L; ++b)
                    cell.sup_rd[b] = std::max(cell.sup_rd[b], row[b]);
            for (const auto& prow : tr.p)
                for (double v : prow) cell.max_p = std::max(cell.max_p, v);
            cell.trace = std::move(tr);
        } catch (const std::exception& ex) {
            cell.error = ex.what();
        }
        cell.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    });

    for (std::size_t mi = 0; mi < cfg.m_list.size(); ++mi) {
        std::vector<double> med(cfg.L + 1, 0.0);
        for (std::size_t b = 0; b <= cfg.L; ++b) {
            std::vector<double> vals;
            for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
                const SweepCell& cell = result.cells[mi * cfg.seeds.size() + si];
                if (cell.error.empty()) vals.push_back(cell.sup_rd[b]);
            }
            med[b] = vals.empty() ? std::numeric_limits<double>::quiet_NaN()
                                  : detail::median_of(vals);
        }
        result.median_sup_rd[cfg.m_list[mi]] = std::move(med);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Initialization-norm bound frequencies.
//
// Per seed and layer the checked bounds are
//   sqrt(1/2)  <= ||abar(0)/sqrt(m)||_2        <= sqrt(3/2)
//   1/2        <= ||Wbar^[l](0)/sqrt(m)||_2->2 <= 2
//   sqrt(md/2) <= ||Wbar^[1](0)||_F            <= sqrt(3md/2)
//   sqrt(m^2/2)<= ||Wbar^[l](0)||_F            <= sqrt(3m^2/2),  l >= 2.
//
// Normalized blocks are streamed directly from the parameter substreams
// (Wbar = W / beta_l draws the same unit Gaussians init_params scales), so
// the widest widths never materialize a full Params.  Spectral norms of the
// m x m blocks use the Lanczos estimator; power iteration cannot resolve the
// clustered top of a Gaussian spectrum in reasonable time at m = 4096.
// ---------------------------------------------------------------------------

struct InitBoundsReport {
    std::size_t m = 0;
    std::size_t d = 0;
    std::size_t L = 0;
    std::size_t seed_count = 0;
    bool below_width_threshold = false;  // m < 256: high-probability regime not reached
    // frequencies over seeds
    double freq_a_norm = 0.0;
    std::vector<double> freq_w_opnorm;  // per layer 1..L
    double freq_w1_frobenius = 0.0;
    std::vector<double> freq_w_frobenius;  // per layer 2..L
    // observed ranges for the report
    double min_a_norm = 0.0, max_a_norm = 0.0;
    std::vector<double> min_w_opnorm, max_w_opnorm;
};

inline InitBoundsReport check_initial_bounds(const ExperimentConfig& cfg,
                                             const std::vector<std::uint64_t>& seeds) {
    const std::size_t L = cfg.L;
    const std::size_t count = seeds.size();
    detail::require(count >= 1, "check_initial_bounds: need at least one seed");
    std::size_t m = cfg.m_list.empty() ? 0 : cfg.m_list.back();
    detail::require(m >= 1, "check_initial_bounds: empty m_list");

    InitBoundsReport rep;
    rep.m = m;
    rep.d = cfg.d;
    rep.L = L;
    rep.seed_count = count;
    rep.below_width_threshold = m < 256;

    std::vector<double> a_norms(count);
    Matrix opnorm(count, L), frob(count, L);
    run_parallel(count, cfg.workers, [&](std::size_t si) {
        const std::uint64_t seed = seeds[si];
        const double sqm = std::sqrt(static_cast<double>(m));
        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t cols = (l == 0) ? cfg.d : m;
            Matrix w(m, cols);
            Rng rng(derive_seed(seed, "params", l));
            double sumsq = 0.0;
            for (double& x : w.data) {
                x = rng.gaussian();
                sumsq += x * x;
            }
            frob(si, l) = std::sqrt(sumsq);
            const double sn = (m <= 512) ? operator_norm(w, 1e-10)
                                         : spectral_norm_lanczos(w, 48);
            opnorm(si, l) = sn / sqm;
        }
        Rng rng(derive_seed(seed, "params", L));
        double sumsq = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double x = rng.gaussian();
            sumsq += x * x;
        }
        a_norms[si] = std::sqrt(sumsq) / sqm;
    });

    const double md = static_cast<double>(m);
    const double dd = static_cast<double>(cfg.d);
    std::size_t hits_a = 0, hits_w1f = 0;
    std::vector<std::size_t> hits_op(L, 0), hits_f(L, 0);
    rep.min_a_norm = a_norms[0];
    rep.max_a_norm = a_norms[0];
    rep.min_w_opnorm.assign(L, std::numeric_limits<double>::infinity());
    rep.max_w_opnorm.assign(L, 0.0);
    for (std::size_t si = 0; si < count; ++si) {
        if (a_norms[si] >= std::sqrt(0.5) && a_norms[si] <= std::sqrt(1.5)) ++hits_a;
        rep.min_a_norm = std::min(rep.min_a_norm, a_norms[si]);
        rep.max_a_norm = std::max(rep.max_a_norm, a_norms[si]);
        if (frob(si, 0) >= std::sqrt(md * dd / 2.0) && frob(si, 0) <= std::sqrt(1.5 * md * dd))
            ++hits_w1f;
        for (std::size_t l = 0; l < L; ++l) {
            if (opnorm(si, l) >= 0.5 && opnorm(si, l) <= 2.0) ++hits_op[l];
            rep.min_w_opnorm[l] = std::min(rep.min_w_opnorm[l], opnorm(si, l));
            rep.max_w_opnorm[l] = std::max(rep.max_w_opnorm[l], opnorm(si, l));
            if (l >= 1 && frob(si, l) >= std::sqrt(0.5) * md &&
                frob(si, l) <= std::sqrt(1.5) * md)
                ++hits_f[l];
        }
    }
    const double cn = static_cast<double>(count);
    rep.freq_a_norm = hits_a / cn;
    rep.freq_w1_frobenius = hits_w1f / cn;
    rep.freq_w_opnorm.resize(L);
    for (std::size_t l = 0; l < L; ++l) rep.freq_w_opnorm[l] = hits_op[l] / cn;
    for (std::size_t l = 1; l < L; ++l) rep.freq_w_frobenius.push_back(hits_f[l] / cn);
    return rep;
}

// ---------------------------------------------------------------------------
// Phase scan over initialization exponents.
// ---------------------------------------------------------------------------

struct PhaseRow {
    std::vector<double> gamma;
    double s = 0.0;  // laziness exponent
    std::size_t m = 0;
    std::vector<double> median_sup_rd;  // per block
    double lambda_S = 0.0;
    bool monotone_checked = false;  // s > 0 rows only
    bool monotone_decrease = false;
    std::string error;
};

inline std::vector<PhaseRow> run_phase_scan(const ExperimentConfig& cfg) {
    detail::require(!cfg.gamma_grid.empty(), "run_phase_scan: gamma_grid is empty");
    std::vector<PhaseRow> rows;
    for (const auto& gamma : cfg.gamma_grid) {
        ExperimentConfig sub = cfg;
        sub.gamma = gamma;
        double gsum = 0.0;
        for (double g : gamma) gsum += g;
        const double s = 0.5 * static_cast<double>(cfg.L + 1) - gsum;
        std::vector<PhaseRow> these;
        try {
            SweepResult res = run_lazy_suite(sub);
            for (std::size_t m : sub.m_list) {
                PhaseRow row;
                row.gamma = gamma;
                row.s = s;
                row.m = m;
                row.median_sup_rd = res.median_sup_rd[m];
                for (const auto& cell : res.cells)
                    if (cell.m == m) {
                        row.lambda_S = cell.lambda_S;
                        break;
                    }
                these.push_back(std::move(row));
            }
            if (s > 0.0 && sub.m_list.size() >= 2) {
                bool mono = true;
                for (std::size_t b = 0; b <= cfg.L; ++b)
                    for (std::size_t mi = 1; mi < sub.m_list.size(); ++mi)
                        if (!(res.median_sup_rd[sub.m_list[mi]][b] <
                              res.median_sup_rd[sub.m_list[mi - 1]][b]))
                            mono = false;
                for (auto& row : these) {
                    row.monotone_checked = true;
                    row.monotone_decrease = mono;
                }
            }
        } catch (const std::exception& ex) {
            PhaseRow row;
            row.gamma = gamma;
            row.s = s;
            row.error = ex.what();
            these.push_back(std::move(row));
        }
        for (auto& row : these) rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const PhaseRow& a, const PhaseRow& b) { return a.s < b.s; });
    return rows;
}

}  // namespace lazylab
