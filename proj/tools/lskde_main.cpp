// Command-line front end: fit estimates on CSV data, run the selection rule,
// drive the Monte Carlo studies, and inspect catalog kernels.
//
// Exit codes: 0 ok, 2 malformed input, 3 configuration violation,
// 4 bandwidth-grid cap exceeded, 5 numerical-quality abort (mass leakage).

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lskde/experiments.hpp"
#include "lskde/selection.hpp"

using nlohmann::json;
using namespace lskde;

namespace {

constexpr int kSchemaVersion = 1;

class input_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Headerless or headered CSV, comma or tab delimited, one observation per row.
struct CsvData {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // row major
};

CsvData read_csv(const std::string& path, const std::vector<std::size_t>& columns) {
    std::ifstream in(path);
    if (!in) throw input_error("input: cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) throw input_error("input: '" + path + "' holds no data rows");
    const char delim = lines.front().find('\t') != std::string::npos ? '\t' : ',';

    auto split = [delim](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string field;
        while (std::getline(ss, field, delim)) out.push_back(field);
        return out;
    };
    auto numeric = [](const std::string& f, double& v) {
        try {
            std::size_t pos = 0;
            v = std::stod(f, &pos);
            while (pos < f.size() && std::isspace(static_cast<unsigned char>(f[pos]))) ++pos;
            return pos == f.size();
        } catch (...) {
            return false;
        }
    };

    std::size_t first_row = 0;
    {
        // A non-numeric first row is treated as a header.
        double v;
        bool all_numeric = true;
        for (const auto& f : split(lines[0])) {
            if (!numeric(f, v)) {
                all_numeric = false;
                break;
            }
        }
        if (!all_numeric) first_row = 1;
    }
    if (first_row >= lines.size()) throw input_error("input: no numeric rows after the header");

    const std::size_t width = split(lines[first_row]).size();
    std::vector<std::size_t> use = columns;
    if (use.empty()) {
        for (std::size_t c = 0; c < width; ++c) use.push_back(c);
    }
    for (std::size_t c : use) {
        if (c >= width)
            throw config_error("columns: index " + std::to_string(c) + " out of range (row width " +
                               std::to_string(width) + ")");
    }

    CsvData data;
    data.cols = use.size();
    for (std::size_t r = first_row; r < lines.size(); ++r) {
        const auto fields = split(lines[r]);
        if (fields.size() != width)
            throw input_error("input: row " + std::to_string(r + 1) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(width));
        for (std::size_t c : use) {
            double v;
            if (!numeric(fields[c], v))
                throw input_error("input: row " + std::to_string(r + 1) + ", column " +
                                  std::to_string(c) + " is not numeric: '" + fields[c] + "'");
            data.values.push_back(v);
        }
        ++data.rows;
    }
    return data;
}

std::vector<double> parse_reals(const std::string& csv, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string field;
    while (std::getline(ss, field, ',')) {
        try {
            out.push_back(std::stod(field));
        } catch (...) {
            throw config_error(flag + ": cannot parse '" + field + "' as a real number");
        }
    }
    if (out.empty()) throw config_error(flag + ": empty list");
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& csv, const std::string& flag) {
    std::vector<std::size_t> out;
    for (double v : parse_reals(csv, flag)) {
        if (v < 1 || v != std::floor(v))
            throw config_error(flag + ": entries must be positive integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::vector<double> per_axis(std::vector<double> v, std::size_t d, const std::string& flag) {
    if (v.size() == 1 && d > 1) v.assign(d, v[0]);
    if (v.size() != d)
        throw config_error(flag + ": expected 1 or " + std::to_string(d) + " values, got " +
                           std::to_string(v.size()));
    return v;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("output: cannot open '" + path + "' for writing");
    out << content;
}

json grid_json(const EvaluationGrid& grid) {
    json axes = json::array();
    for (std::size_t k = 0; k < grid.dim(); ++k) {
        axes.push_back({{"lo", grid.lo(k)},
                        {"hi", grid.hi(k)},
                        {"nodes", grid.nodes(k)},
                        {"spacing", grid.spacing(k)}});
    }
    return {{"axes", axes}, {"cell_volume", grid.cell_volume()}, {"scheme", "midpoint"}};
}

struct FitArgs {
    std::string input, output;
    std::string kernel = "triangular";
    int order = 1;
    double s = 2.0;
    std::vector<std::size_t> columns;
    std::string h_fixed, h_min, h_max;
    double ratio = std::sqrt(2.0);
    double grid_res = 0.0; // evaluation-grid spacing; 0 = default rule
    bool binned = false;
    bool allow_large_grid = false;
    int threads = 0;
};

int run_fit(const FitArgs& a) {
    const CsvData csv = read_csv(a.input, a.columns);
    const std::size_t d = csv.cols;
    const Sample sample(csv.rows, d, csv.values);
    if (!(a.s >= 1.0)) throw config_error("s: must be >= 1");
    if (a.order < 1) throw config_error("order: must be >= 1");
    const ProductKernel kernel(build_higher_order(base_kernel_by_name(a.kernel), a.order), d);
    const int threads =
        a.threads > 0 ? a.threads : static_cast<int>(std::thread::hardware_concurrency());

    json config{{"input", a.input},          {"kernel", a.kernel}, {"order", a.order},
                {"s", a.s},                  {"binned", a.binned}, {"threads", threads},
                {"grid_res", a.grid_res},    {"n", csv.rows},      {"dim", d}};

    if (!a.h_fixed.empty()) {
        const std::vector<double> h = per_axis(parse_reals(a.h_fixed, "h"), d, "h");
        for (double v : h) {
            if (!(v > 0.0) || v > 1.0) throw config_error("h: components must lie in (0, 1]");
        }
        const double spacing =
            a.grid_res > 0.0 ? a.grid_res : *std::min_element(h.begin(), h.end()) / 8.0;
        const auto grid = build_eval_grid(data_box(sample), kernel, h, spacing);
        const DensityEstimate est =
            fit_kde(sample, kernel, Bandwidth(h), grid, FitOptions{a.binned});
        std::string out = "# lskde fit kernel=" + a.kernel + " order=" + std::to_string(a.order);
        out += " h=";
        for (std::size_t k = 0; k < h.size(); ++k) out += (k ? "," : "") + format17(h[k]);
        out += " binned=" + std::string(a.binned ? "1" : "0") +
               " mass_defect=" + format17(est.mass_defect) + "\n";
        for (std::size_t k = 0; k < d; ++k) out += "x" + std::to_string(k) + ",";
        out += "density\n";
        std::vector<double> t(d);
        for (std::size_t j = 0; j < grid->size(); ++j) {
            grid->node(j, t);
            for (std::size_t k = 0; k < d; ++k) out += format17(t[k]) + ",";
            out += format17(est.values[j]) + "\n";
        }
        write_file(a.output, out);
        return 0;
    }

    if (a.h_min.empty() || a.h_max.empty())
        throw config_error("bandwidth: pass either --h or both --h-min and --h-max");
    const std::vector<double> h_min = per_axis(parse_reals(a.h_min, "h-min"), d, "h-min");
    const std::vector<double> h_max = per_axis(parse_reals(a.h_max, "h-max"), d, "h-max");
    if (!(a.ratio > 1.0)) throw config_error("ratio: must be > 1");
    const BandwidthGrid bandwidths = BandwidthGrid::geometric(
        h_min, h_max, a.ratio, BandwidthGrid::kDefaultCap, a.allow_large_grid);
    const double spacing = a.grid_res > 0.0
                               ? a.grid_res
                               : *std::min_element(h_min.begin(), h_min.end()) / 4.0;
    std::vector<double> inflate(d);
    for (std::size_t k = 0; k < d; ++k) inflate[k] = 2.0 * h_max[k];
    const auto grid = build_eval_grid(data_box(sample), kernel, inflate, spacing);
    const MajorantConfig cfg = MajorantConfig::make(a.s, sample.size());
    const SelectionResult res =
        select(sample, kernel, bandwidths, grid, cfg, SelectionOptions{a.binned, threads, 32});

    config["h_min"] = h_min;
    config["h_max"] = h_max;
    config["ratio"] = a.ratio;
    json members = json::array();
    for (const auto& b : bandwidths.members()) members.push_back(b.components());
    json doc{{"schema_version", kSchemaVersion},
             {"tool", "lskde"},
             {"command", "fit"},
             {"config", config},
             {"selection",
              {{"h_selected", res.h_selected},
               {"selected_index", res.selected},
               {"bandwidths", members},
               {"criterion", res.criterion},
               {"sup_positive", res.sup_positive},
               {"m_star", res.m_star},
               {"g_single", res.g_single},
               {"a_diag", res.a_diag},
               {"b_diag", res.b_diag},
               {"binned", res.binned}}},
             {"estimate",
              {{"grid", grid_json(*grid)},
               {"values", res.estimate.values.values()},
               {"mass_defect", res.estimate.mass_defect}}}};
    write_file(a.output, doc.dump(2) + "\n");
    return 0;
}

struct StudyArgs {
    std::string study = "oracle-ratio";
    std::string density = "gauss1d";
    std::string kernel = "triangular";
    int order = 1;
    double s = 2.0;
    double q = 1.0;
    std::string n_single = "1000";
    std::string n_list;
    std::size_t reps = 100;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string h_min = "0.05", h_max = "1.0";
    double ratio = std::sqrt(2.0);
    std::string h_values = "0.1,0.3,0.6";
    double kappa1 = 1.0, kappa2 = 1.0;
    double grid_res = 0.0;
    bool binned = false;
    bool allow_large_grid = false;
    int threads = 0;
    std::string output;
};

int run_simulate(const StudyArgs& a) {
    if (!a.seed_set) throw config_error("seed: required for reproducible studies");
    if (a.reps < 1) throw config_error("reps: must be >= 1");
    if (!(a.s >= 1.0)) throw config_error("s: must be >= 1");
    if (!(a.q >= 1.0)) throw config_error("q: must be >= 1");
    const TestDensity& density = density_by_name(a.density);
    const ProductKernel kernel(build_higher_order(base_kernel_by_name(a.kernel), a.order),
                               density.dim);
    StudyOptions opts;
    opts.threads =
        a.threads > 0 ? a.threads : static_cast<int>(std::thread::hardware_concurrency());
    opts.binned = a.binned;
    opts.grid_spacing = a.grid_res;
    opts.allow_large_grid = a.allow_large_grid;

    json config{{"study", a.study},   {"density", a.density}, {"kernel", a.kernel},
                {"order", a.order},   {"s", a.s},             {"q", a.q},
                {"reps", a.reps},     {"seed", a.seed},       {"binned", a.binned},
                {"threads", opts.threads},                    {"grid_res", a.grid_res}};
    json doc{{"schema_version", kSchemaVersion}, {"tool", "lskde"}, {"command", "simulate"}};

    if (a.study == "oracle-ratio") {
        const std::size_t n = parse_sizes(a.n_single, "n").at(0);
        const std::vector<double> h_min = per_axis(parse_reals(a.h_min, "h-min"), density.dim,
                                                   "h-min");
        const std::vector<double> h_max = per_axis(parse_reals(a.h_max, "h-max"), density.dim,
                                                   "h-max");
        const BandwidthGrid bandwidths = BandwidthGrid::geometric(
            h_min, h_max, a.ratio, BandwidthGrid::kDefaultCap, a.allow_large_grid);
        const OracleRatioReport rep =
            oracle_ratio_study(density, kernel, bandwidths, a.s, a.q, n, a.reps, a.seed, opts);
        config["n"] = n;
        config["h_min"] = h_min;
        config["h_max"] = h_max;
        config["ratio"] = a.ratio;
        json members = json::array();
        for (const auto& b : bandwidths.members()) members.push_back(b.components());
        doc["config"] = config;
        doc["report"] = {{"bandwidths", members},
                         {"selected_errors", rep.selected_errors},
                         {"fixed_errors", rep.fixed_errors},
                         {"ratios", rep.ratios},
                         {"fixed_risk", rep.fixed_risk},
                         {"selected_risk", rep.selected_risk},
                         {"selected_se", rep.selected_se},
                         {"best_fixed_risk", rep.best_fixed_risk},
                         {"median_ratio", rep.median_ratio},
                         {"p90_ratio", rep.p90_ratio},
                         {"reference_constant", rep.reference_constant},
                         {"a_diag", rep.a_diag},
                         {"b_diag", rep.b_diag},
                         {"mass_defect_max", rep.mass_defect_max},
                         {"oracle_sanity", rep.oracle_sanity}};
    } else if (a.study == "rate") {
        const std::vector<std::size_t> n_values = parse_sizes(
            a.n_list.empty() ? a.n_single : a.n_list, "n-list");
        const RateStudyReport rep = rate_study(density, kernel, a.s, a.q, n_values, a.reps,
                                               a.seed, a.kappa1, a.kappa2, opts);
        config["n_list"] = n_values;
        config["kappa1"] = a.kappa1;
        config["kappa2"] = a.kappa2;
        doc["config"] = config;
        doc["report"] = {{"n_values", rep.n_values},
                         {"risks", rep.risks},
                         {"std_errors", rep.std_errors},
                         {"h_min_used", rep.h_min_used},
                         {"h_max_used", rep.h_max_used},
                         {"slope", rep.slope},
                         {"theory_exponent", rep.theory_exponent},
                         {"alpha_eff", rep.alpha_eff},
                         {"mass_defect_max", rep.mass_defect_max}};
    } else if (a.study == "variance-identity") {
        const std::size_t n = parse_sizes(a.n_single, "n").at(0);
        const std::vector<double> h_values = parse_reals(a.h_values, "h");
        const auto reports =
            variance_identity_check(density, kernel, h_values, n, a.reps, a.seed, opts);
        config["n"] = n;
        config["h"] = h_values;
        doc["config"] = config;
        json rows = json::array();
        for (const auto& r : reports) {
            rows.push_back({{"h", r.h},
                            {"mc_mean_sq", r.mc_mean_sq},
                            {"predicted", r.predicted},
                            {"rel_gap", r.rel_gap},
                            {"mc_mean_norm", r.mc_mean_norm},
                            {"lower_bound", r.lower_bound}});
        }
        doc["report"] = {{"per_h", rows}};
    } else {
        throw config_error("study: unknown kind '" + a.study +
                           "' (oracle-ratio, rate, variance-identity)");
    }
    write_file(a.output, doc.dump(2) + "\n");
    return 0;
}

struct KernelInfoArgs {
    std::string kernel = "triangular";
    int order = 1;
    std::size_t dim = 1;
    std::string s_list = "1,2";
};

int run_kernel_info(const KernelInfoArgs& a) {
    if (a.order < 1) throw config_error("order: must be >= 1");
    if (a.dim < 1) throw config_error("dim: must be >= 1");
    const ProductKernel K(build_higher_order(base_kernel_by_name(a.kernel), a.order), a.dim);
    const auto& factor = K.factor();
    std::printf("kernel          %s\n", a.kernel.c_str());
    std::printf("order           %d\n", a.order);
    std::printf("dim             %zu\n", a.dim);
    std::printf("support radius  %s\n", format17(factor.radius()).c_str());
    std::printf("K(0)            %s\n", format17(K.value_at_zero()).c_str());
    std::printf("||K||_1         %s\n", format17(K.norm(1.0)).c_str());
    std::printf("||K||_2         %s\n", format17(K.norm(2.0)).c_str());
    for (double s : parse_reals(a.s_list, "s-list")) {
        if (!(s >= 1.0)) throw config_error("s-list: entries must be >= 1");
        if (s == 1.0 || s == 2.0) continue; // already printed
        std::printf("||K||_%-9s %s\n", format17(s).c_str(), format17(K.norm(s)).c_str());
    }
    for (int j = 0; j <= a.order; ++j) {
        std::printf("moment j=%-6d %s\n", j, format17(factor.moment(j)).c_str());
    }
    return 0;
}

void add_study_flags(CLI::App* cmd, StudyArgs& a, bool rate_alias) {
    if (!rate_alias) {
        cmd->add_option("--study", a.study, "oracle-ratio | rate | variance-identity");
    }
    cmd->add_option("--density", a.density, "catalog density name");
    cmd->add_option("--kernel", a.kernel, "catalog kernel name");
    cmd->add_option("--order", a.order, "bias-reduction order l");
    cmd->add_option("--s", a.s, "loss index s >= 1");
    cmd->add_option("--q", a.q, "risk exponent q >= 1");
    cmd->add_option("--n", a.n_single, "sample size");
    cmd->add_option("--n-list", a.n_list, "comma-separated sample sizes (rate study)");
    cmd->add_option("--reps", a.reps, "Monte Carlo replications");
    cmd->add_option("--seed", a.seed, "random seed (required)")->each([&a](const std::string&) {
        a.seed_set = true;
    });
    cmd->add_option("--h", a.h_values, "bandwidths for the variance-identity study");
    cmd->add_option("--h-min", a.h_min, "per-axis lower bandwidth bound");
    cmd->add_option("--h-max", a.h_max, "per-axis upper bandwidth bound");
    cmd->add_option("--ratio", a.ratio, "geometric spacing of the bandwidth grid");
    cmd->add_option("--kappa1", a.kappa1, "rate study: h_min = kappa1 / n");
    cmd->add_option("--kappa2", a.kappa2, "rate study: h_max = [kappa2 ln n]^(-s/(2d))");
    cmd->add_option("--grid-res", a.grid_res, "evaluation-grid spacing (0 = default rule)");
    cmd->add_flag("--binned", a.binned, "linear-binning evaluation path");
    cmd->add_flag("--allow-large-grid", a.allow_large_grid,
                  "override the 256-point bandwidth-grid cap");
    cmd->add_option("--threads", a.threads, "worker thread cap (0 = hardware)");
    cmd->add_option("--output", a.output, "report path (JSON)")->required();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bandwidth selection for kernel density estimation under L_s losses"};
    app.require_subcommand(1);
    // `--h` is part of the flag contract, so help must not claim `-h`.
    app.set_help_flag("--help", "print usage");
    // Config files are read at the top level with one [subcommand] section:
    //   lskde --config run.ini fit ...
    app.set_config("--config");

    FitArgs fit_args;
    CLI::App* fit_cmd = app.add_subcommand("fit", "fit a density estimate from CSV data");
    fit_cmd->set_help_flag("--help", "print usage");
    fit_cmd->add_option("--input", fit_args.input, "CSV sample, one observation per row")
        ->required();
    fit_cmd->add_option("--output", fit_args.output, "output path")->required();
    fit_cmd->add_option("--columns", fit_args.columns, "column indices to use (default: all)");
    fit_cmd->add_option("--kernel", fit_args.kernel, "catalog kernel name");
    fit_cmd->add_option("--order", fit_args.order, "bias-reduction order l");
    fit_cmd->add_option("--s", fit_args.s, "loss index s >= 1");
    fit_cmd->add_option("--h", fit_args.h_fixed, "fixed bandwidth (comma list per axis)");
    fit_cmd->add_option("--h-min", fit_args.h_min, "grid mode: per-axis lower bound");
    fit_cmd->add_option("--h-max", fit_args.h_max, "grid mode: per-axis upper bound");
    fit_cmd->add_option("--ratio", fit_args.ratio, "grid mode: geometric spacing");
    fit_cmd->add_option("--grid-res", fit_args.grid_res,
                        "evaluation-grid spacing (0 = default rule)");
    fit_cmd->add_flag("--binned", fit_args.binned, "linear-binning evaluation path");
    fit_cmd->add_flag("--allow-large-grid", fit_args.allow_large_grid,
                      "override the 256-point bandwidth-grid cap");
    fit_cmd->add_option("--threads", fit_args.threads, "worker thread cap (0 = hardware)");

    StudyArgs sim_args;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "run a seeded Monte Carlo study");
    sim_cmd->set_help_flag("--help", "print usage");
    add_study_flags(sim_cmd, sim_args, false);

    StudyArgs rate_args;
    rate_args.study = "rate";
    CLI::App* rates_cmd = app.add_subcommand("rates", "alias for simulate --study rate");
    rates_cmd->set_help_flag("--help", "print usage");
    add_study_flags(rates_cmd, rate_args, true);

    KernelInfoArgs ker_args;
    CLI::App* ker_cmd = app.add_subcommand("kernel-info", "print kernel norms and moments");
    ker_cmd->set_help_flag("--help", "print usage");
    ker_cmd->add_option("--kernel", ker_args.kernel, "catalog kernel name");
    ker_cmd->add_option("--order", ker_args.order, "bias-reduction order l");
    ker_cmd->add_option("--dim", ker_args.dim, "dimension d");
    ker_cmd->add_option("--s-list", ker_args.s_list, "comma list of norm indices");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }

    try {
        if (fit_cmd->parsed()) return run_fit(fit_args);
        if (sim_cmd->parsed()) return run_simulate(sim_args);
        if (rates_cmd->parsed()) return run_simulate(rate_args);
        if (ker_cmd->parsed()) return run_kernel_info(ker_args);
    } catch (const input_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const grid_cap_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const mass_leakage_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    } catch (const config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 3;
}
