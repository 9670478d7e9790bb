#include "hte/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hte/parallel.hpp"
#include "hte/rng.hpp"

#include <nlohmann/json.hpp>

namespace hte::driver {

namespace {

enum : std::uint64_t {
    kRoleData = 0x64617461,        // "data"
    kRoleFit = 0x666974,           // "fit"
    kRoleValidation = 0x76616c,    // "val"
    kRoleSemisynthLoad = 0x6c6f6164,
};

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string format_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CellKey {
    meta::Learner learner;
    meta::Procedure procedure;
};

struct CellAccumulator {
    Matrix panel;                            // R x m, slot per replication
    std::vector<std::uint8_t> rep_valid;     // 1 = prediction present
    std::vector<meta::WarningCounters> rep_warnings;
    std::vector<double> rep_runtime;
    std::vector<std::string> failures;       // first few failure diagnostics
};

double elapsed_s(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void ExperimentConfig::validate() const {
    if (!semisynthetic() && (design_id < 1 || design_id > 6))
        throw InvalidInput("ExperimentConfig: design_id must be in 1..6");
    if (learners.empty() || procedures.empty())
        throw InvalidInput("ExperimentConfig: empty learner or procedure set");
    if (n_train.empty() || n_train.size() != replications.size())
        throw InvalidInput("ExperimentConfig: n_train and replications must pair up");
    for (int n : n_train)
        if (n < 1) throw InvalidInput("ExperimentConfig: n_train entries must be positive");
    for (int r : replications)
        if (r < 1) throw InvalidInput("ExperimentConfig: replication counts must be positive");
    if (n_validation < 1) throw InvalidInput("ExperimentConfig: n_validation must be positive");
    if (forest.trees < 1 || forest.min_leaf < 1)
        throw InvalidInput("ExperimentConfig: bad forest settings");
    if (clip_epsilon < 0.0 || clip_epsilon >= 0.5)
        throw InvalidInput("ExperimentConfig: clip_epsilon must be in [0, 0.5)");
}

ExperimentConfig ExperimentConfig::paper_profile() {
    ExperimentConfig c;
    c.forest.trees = 1000;
    c.n_train = {500, 2000, 8000, 32000};
    c.replications = {2000, 1000, 500, 250};
    c.n_validation = 10000;
    return c;
}

ExperimentConfig ExperimentConfig::desk_profile() {
    ExperimentConfig c;
    c.forest.trees = 200;
    c.n_train = {500, 2000, 8000, 32000};
    c.replications = {200, 100, 50, 25};
    c.n_validation = 1000;
    return c;
}

std::uint64_t derive_seed(std::uint64_t master_seed, int design_id, meta::Learner learner,
                          meta::Procedure procedure, int replication_index) {
    // S/SW/T degrade every procedure to full-sample estimation, so their fit
    // seeds ignore the procedure field and the degeneracy stays exact.
    if (learner == meta::Learner::S || learner == meta::Learner::SW ||
        learner == meta::Learner::T)
        procedure = meta::Procedure::Full;
    std::uint64_t h = chain(master_seed, kRoleFit);
    h = chain(h, static_cast<std::uint64_t>(design_id));
    h = chain(h, static_cast<std::uint64_t>(learner));
    h = chain(h, static_cast<std::uint64_t>(procedure));
    h = chain(h, static_cast<std::uint64_t>(replication_index));
    return h;
}

std::uint64_t derive_data_seed(std::uint64_t master_seed, int design_id, int replication_index) {
    std::uint64_t h = chain(master_seed, kRoleData);
    h = chain(h, static_cast<std::uint64_t>(design_id));
    h = chain(h, static_cast<std::uint64_t>(replication_index));
    return h;
}

std::uint64_t derive_validation_seed(std::uint64_t master_seed, int design_id) {
    return chain(chain(master_seed, kRoleValidation), static_cast<std::uint64_t>(design_id));
}

namespace {

struct ExperimentData {
    // Semi-synthetic source (empty for synthetic designs).
    SimulatedDataset source;
    std::vector<int> validation_indices;

    // Validation covariates and truth shared by every cell of a design.
    Matrix validation_X;
    std::vector<double> validation_truth;
    int design_for_seed = 0;  // semi-synthetic uses 0 in the seed tree
    std::string design_label;
};

ExperimentData prepare_data(const ExperimentConfig& config) {
    ExperimentData data;
    if (config.semisynthetic()) {
        data.design_for_seed = 0;
        data.design_label = "semisynth";
        RngStream load_rng(chain(config.master_seed, kRoleSemisynthLoad));
        const dgp::ColumnMap columns = config.colmap_path.empty()
                                           ? dgp::ColumnMap::defaults()
                                           : dgp::ColumnMap::load(config.colmap_path);
        data.source = dgp::load_semisynthetic(config.data_path, load_rng, columns,
                                              config.augment_p);
        RngStream val_rng(derive_validation_seed(config.master_seed, 0));
        data.validation_indices = dgp::draw_validation_indices(
            data.source.n(), static_cast<std::size_t>(config.n_validation), val_rng);
        data.validation_X = data.source.observed.X.take_rows(data.validation_indices);
        data.validation_truth = take<double>(data.source.tau_true, data.validation_indices);
    } else {
        data.design_for_seed = config.design_id;
        data.design_label = std::to_string(config.design_id);
        const dgp::SimulationDesign design = dgp::SimulationDesign::standard(config.design_id);
        RngStream val_rng(derive_validation_seed(config.master_seed, config.design_id));
        const SimulatedDataset validation =
            dgp::generate_dataset(design, config.n_validation, val_rng);
        data.validation_X = validation.observed.X;
        data.validation_truth = validation.tau_true;
    }
    return data;
}

// Draws the shared training dataset of one replication.
SimulatedDataset training_draw(const ExperimentConfig& config, const ExperimentData& data,
                               int n_train, int rep, int* redraws) {
    RngStream rng(derive_data_seed(config.master_seed, data.design_for_seed, rep));
    if (config.semisynthetic()) {
        const std::vector<int> rows = dgp::draw_training_indices(
            data.source.n(), data.validation_indices, static_cast<std::size_t>(n_train), rng);
        return data.source.take_rows(rows);
    }
    const dgp::SimulationDesign design = dgp::SimulationDesign::standard(config.design_id);
    SimulatedDataset out = dgp::generate_dataset(design, n_train, rng);
    if (redraws) *redraws = out.redraw_count;
    return out;
}

}  // namespace

ResultTable run_experiment(const ExperimentConfig& config) {
    config.validate();
    const ExperimentData data = prepare_data(config);

    std::vector<CellKey> cells;
    for (const auto learner : config.learners)
        for (const auto procedure : config.procedures) cells.push_back({learner, procedure});

    forest::ForestParams forest_params;
    forest_params.n_trees = config.forest.trees;
    forest_params.min_leaf = config.forest.min_leaf;
    forest_params.mtry = config.forest.mtry;
    const std::shared_ptr<const BaseLearner> base =
        config.base_override ? config.base_override
                             : std::make_shared<ForestBaseLearner>(forest_params);

    ResultTable table;
    const std::size_t m = data.validation_truth.size();

    for (std::size_t size_idx = 0; size_idx < config.n_train.size(); ++size_idx) {
        const int n_train = config.n_train[size_idx];
        const int n_reps = config.replications[size_idx];

        std::vector<CellAccumulator> acc(cells.size());
        for (auto& a : acc) {
            a.panel = Matrix(static_cast<std::size_t>(n_reps), m);
            a.rep_valid.assign(static_cast<std::size_t>(n_reps), 0);
            a.rep_warnings.assign(static_cast<std::size_t>(n_reps), {});
            a.rep_runtime.assign(static_cast<std::size_t>(n_reps), 0.0);
            a.failures.resize(static_cast<std::size_t>(n_reps));
        }

        parallel_for(static_cast<std::size_t>(n_reps), config.workers, [&](std::size_t rep) {
            int redraws = 0;
            SimulatedDataset train;
            bool data_ok = true;
            std::string data_error;
            try {
                train = training_draw(config, data, n_train, static_cast<int>(rep), &redraws);
            } catch (const Error& e) {
                data_ok = false;
                data_error = e.what();
            }
            for (std::size_t c = 0; c < cells.size(); ++c) {
                auto& cell = acc[c];
                auto& warn = cell.rep_warnings[rep];
                warn.dgp_redraws += redraws;
                if (!data_ok) {
                    warn.failed_replications += 1;
                    cell.failures[rep] = "data generation: " + data_error;
                    continue;
                }
                const auto started = std::chrono::steady_clock::now();
                try {
                    meta::FitContext ctx;
                    ctx.base = base.get();
                    ctx.propensity.clip_epsilon = config.clip_epsilon;
                    ctx.seed = derive_seed(config.master_seed, data.design_for_seed,
                                           cells[c].learner, cells[c].procedure,
                                           static_cast<int>(rep));
                    ctx.warnings = &warn;
                    split::ProcedureSpec spec;
                    spec.kind = cells[c].procedure;
                    const meta::CateModel model =
                        split::run_procedure(cells[c].learner, train.observed, spec, ctx);
                    const std::vector<double> preds = model.predict(data.validation_X);
                    std::copy(preds.begin(), preds.end(), cell.panel.row(rep).begin());
                    cell.rep_valid[rep] = 1;
                } catch (const Error& e) {
                    warn.failed_replications += 1;
                    cell.failures[rep] = e.what();
                }
                cell.rep_runtime[rep] = elapsed_s(started);
            }
        });

        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto& cell = acc[c];
            ResultRow row;
            row.design = data.design_label;
            row.learner = meta::to_string(cells[c].learner);
            row.procedure = meta::to_string(cells[c].procedure);
            row.n_train = n_train;

            int n_valid = 0;
            for (int rep = 0; rep < n_reps; ++rep) {
                row.warnings.add(cell.rep_warnings[static_cast<std::size_t>(rep)]);
                row.runtime_s += cell.rep_runtime[static_cast<std::size_t>(rep)];
                n_valid += cell.rep_valid[static_cast<std::size_t>(rep)];
            }
            row.replications = n_valid;

            if (n_valid < 2) {
                row.aborted = true;
                for (int rep = 0; rep < n_reps; ++rep) {
                    const auto& why = cell.failures[static_cast<std::size_t>(rep)];
                    if (!why.empty()) {
                        row.abort_reason = "replication " + std::to_string(rep) + ": " + why;
                        break;
                    }
                }
                if (row.abort_reason.empty())
                    row.abort_reason = "fewer than 2 successful replications";
                table.rows.push_back(std::move(row));
                continue;
            }

            metrics::PredictionPanel panel;
            panel.truth = data.validation_truth;
            panel.preds = Matrix(static_cast<std::size_t>(n_valid), m);
            std::size_t slot = 0;
            for (int rep = 0; rep < n_reps; ++rep) {
                if (!cell.rep_valid[static_cast<std::size_t>(rep)]) continue;
                const auto src = cell.panel.row(static_cast<std::size_t>(rep));
                std::copy(src.begin(), src.end(), panel.preds.row(slot).begin());
                ++slot;
            }
            row.summary = metrics::aggregate(metrics::per_obs_metrics(panel), panel);

            if (!config.save_panels_dir.empty()) {
                const std::string path = config.save_panels_dir + "/panel_" + row.design + "_" +
                                         row.learner + "_" + row.procedure + "_" +
                                         std::to_string(n_train) + ".csv";
                write_panel(panel, path);
            }
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

// ----------------------------------------------------------------------------
// Persistence
// ----------------------------------------------------------------------------

namespace {

constexpr const char* kCsvHeader =
    "design,learner,procedure,n_train,replications,rmse_mean,abs_bias_mean,bias_mean,sd_mean,"
    "skew_mean,kurt_mean,jb_mean,jb_reject_share,corr,varr,se_rmse,runtime_s,warnings";

std::string optional_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

nlohmann::json row_to_json(const ResultRow& row, bool include_runtime) {
    nlohmann::json j;
    j["design"] = row.design;
    j["learner"] = row.learner;
    j["procedure"] = row.procedure;
    j["n_train"] = row.n_train;
    j["replications"] = row.replications;
    auto num = [](double v) { return nlohmann::json(std::stod(format_double(v))); };
    if (row.aborted) {
        for (const char* key : {"rmse_mean", "abs_bias_mean", "bias_mean", "sd_mean", "skew_mean",
                                "kurt_mean", "jb_mean", "jb_reject_share", "corr", "varr",
                                "se_rmse"})
            j[key] = nullptr;
        j["aborted"] = true;
        j["abort_reason"] = row.abort_reason;
    } else {
        const auto& s = row.summary;
        j["rmse_mean"] = num(s.rmse_mean);
        j["abs_bias_mean"] = num(s.abs_bias_mean);
        j["bias_mean"] = num(s.bias_mean);
        j["sd_mean"] = num(s.sd_mean);
        j["skew_mean"] = num(s.skew_mean);
        j["kurt_mean"] = num(s.kurt_mean);
        j["jb_mean"] = num(s.jb_mean);
        j["jb_reject_share"] = num(s.jb_reject_share);
        j["corr"] = s.corr ? nlohmann::json(std::stod(format_double(*s.corr)))
                           : nlohmann::json(nullptr);
        j["varr"] = s.varr ? nlohmann::json(std::stod(format_double(*s.varr)))
                           : nlohmann::json(nullptr);
        j["se_rmse"] = num(s.se_rmse);
    }
    if (include_runtime)
        j["runtime_s"] = std::stod(format_double(row.runtime_s));
    else
        j["runtime_s"] = nullptr;
    j["warnings"] = row.warnings.total();
    j["warning_detail"] = {{"oob_fallbacks", row.warnings.oob_fallbacks},
                           {"propensity_clips", row.warnings.propensity_clips},
                           {"degraded_procedures", row.warnings.degraded_procedures},
                           {"dgp_redraws", row.warnings.dgp_redraws},
                           {"failed_replications", row.warnings.failed_replications}};
    return j;
}

}  // namespace

void write_results(const ResultTable& table, const std::string& path, ResultFormat format,
                   bool include_runtime) {
    std::ofstream out(path);
    if (!out) throw IoError("write_results: cannot open " + path + " for writing");
    if (format == ResultFormat::json) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& row : table.rows) j.push_back(row_to_json(row, include_runtime));
        out << j.dump(2) << '\n';
        if (!out) throw IoError("write_results: write failed for " + path);
        return;
    }
    out << kCsvHeader << '\n';
    for (const auto& row : table.rows) {
        out << row.design << ',' << row.learner << ',' << row.procedure << ',' << row.n_train
            << ',' << row.replications << ',';
        if (row.aborted) {
            out << ",,,,,,,,,,";  // 11 empty metric cells
        } else {
            const auto& s = row.summary;
            out << format_double(s.rmse_mean) << ',' << format_double(s.abs_bias_mean) << ','
                << format_double(s.bias_mean) << ',' << format_double(s.sd_mean) << ','
                << format_double(s.skew_mean) << ',' << format_double(s.kurt_mean) << ','
                << format_double(s.jb_mean) << ',' << format_double(s.jb_reject_share) << ','
                << optional_cell(s.corr) << ',' << optional_cell(s.varr) << ','
                << format_double(s.se_rmse);
        }
        out << ',';
        if (include_runtime) out << format_double(row.runtime_s);
        out << ',' << row.warnings.total() << '\n';
    }
    if (!out) throw IoError("write_results: write failed for " + path);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

ResultTable read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_results_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("read_results_csv: empty file");
    ResultTable table;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != 18)
            throw ParseError("read_results_csv: line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected 18");
        ResultRow row;
        row.design = cells[0];
        row.learner = cells[1];
        row.procedure = cells[2];
        row.n_train = std::stoi(cells[3]);
        row.replications = std::stoi(cells[4]);
        auto opt = [](const std::string& s) -> std::optional<double> {
            if (s.empty()) return std::nullopt;
            return std::stod(s);
        };
        row.aborted = cells[5].empty();
        if (!row.aborted) {
            auto& s = row.summary;
            s.rmse_mean = std::stod(cells[5]);
            s.abs_bias_mean = std::stod(cells[6]);
            s.bias_mean = std::stod(cells[7]);
            s.sd_mean = std::stod(cells[8]);
            s.skew_mean = std::stod(cells[9]);
            s.kurt_mean = std::stod(cells[10]);
            s.jb_mean = std::stod(cells[11]);
            s.jb_reject_share = std::stod(cells[12]);
            s.corr = opt(cells[13]);
            s.varr = opt(cells[14]);
            s.se_rmse = std::stod(cells[15]);
        }
        if (!cells[16].empty()) row.runtime_s = std::stod(cells[16]);
        row.warnings.failed_replications = std::stoi(cells[17]);  // total, kept in one slot
        table.rows.push_back(std::move(row));
    }
    return table;
}

void emit_plotdata(const ResultTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("emit_plotdata: cannot open " + path);
    out << "design,learner,procedure,n_train,metric,value\n";
    for (const auto& row : table.rows) {
        if (row.aborted) continue;
        const auto& s = row.summary;
        const std::pair<const char*, double> values[] = {
            {"rmse_mean", s.rmse_mean},       {"abs_bias_mean", s.abs_bias_mean},
            {"bias_mean", s.bias_mean},       {"sd_mean", s.sd_mean},
            {"skew_mean", s.skew_mean},       {"kurt_mean", s.kurt_mean},
            {"jb_mean", s.jb_mean},           {"jb_reject_share", s.jb_reject_share},
            {"se_rmse", s.se_rmse},
        };
        auto prefix = [&] {
            out << row.design << ',' << row.learner << ',' << row.procedure << ',' << row.n_train
                << ',';
        };
        for (const auto& [name, value] : values) {
            prefix();
            out << name << ',' << format_double(value) << '\n';
        }
        if (s.corr) {
            prefix();
            out << "corr," << format_double(*s.corr) << '\n';
        }
        if (s.varr) {
            prefix();
            out << "varr," << format_double(*s.varr) << '\n';
        }
    }
    if (!out) throw IoError("emit_plotdata: write failed for " + path);
}

void write_panel(const metrics::PredictionPanel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_panel: cannot open " + path);
    out << "truth";
    for (double v : panel.truth) out << ',' << format_full(v);
    out << '\n';
    for (std::size_t r = 0; r < panel.n_reps(); ++r) {
        out << r;
        for (double v : panel.preds.row(r)) out << ',' << format_full(v);
        out << '\n';
    }
    if (!out) throw IoError("write_panel: write failed for " + path);
}

metrics::PredictionPanel read_panel(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_panel: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("read_panel: empty file " + path);
    auto cells = split_line(line);
    if (cells.empty() || cells[0] != "truth")
        throw ParseError("read_panel: first line must start with 'truth'");
    metrics::PredictionPanel panel;
    for (std::size_t i = 1; i < cells.size(); ++i) panel.truth.push_back(std::stod(cells[i]));

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        cells = split_line(line);
        if (cells.size() != panel.truth.size() + 1)
            throw ParseError("read_panel: ragged row in " + path);
        std::vector<double> row;
        row.reserve(panel.truth.size());
        for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(std::stod(cells[i]));
        rows.push_back(std::move(row));
    }
    panel.preds = Matrix(rows.size(), panel.truth.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), panel.preds.row(r).begin());
    return panel;
}

}  // namespace hte::driver
