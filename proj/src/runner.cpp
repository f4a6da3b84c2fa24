#include "tnn/runner.hpp"

#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tnn/fprinciple.hpp"
#include "tnn/io.hpp"
#include "tnn/rng.hpp"
#include "tnn/training.hpp"
#include "tnn/verify.hpp"

namespace tnn {
namespace {

using nlohmann::json;

std::string utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string platform_note() {
#if defined(__linux__)
    std::string os = "linux";
#elif defined(__APPLE__)
    std::string os = "macos";
#else
    std::string os = "unknown-os";
#endif
#if defined(__x86_64__)
    os += " x86_64";
#elif defined(__aarch64__)
    os += " aarch64";
#endif
#if defined(__VERSION__)
    os += std::string(" gcc-compatible ") + __VERSION__;
#endif
    return os;
}

// Collects every emitted file (path, size, digest) so the manifest — written
// last, atomically — can vouch for the whole run.
class ArtifactSink {
  public:
    ArtifactSink(std::string dir, const RunConfig& cfg, std::string config_digest)
        : dir_(std::move(dir)),
          name_(cfg.name),
          comment_(cfg.comment),
          config_digest_(std::move(config_digest)),
          started_(utc_now()) {
        std::filesystem::create_directories(dir_);
    }

    const std::string& dir() const { return dir_; }

    void write(const std::string& rel, std::string_view content) {
        write_file_atomic(dir_ + "/" + rel, content);
        files_.push_back({rel, content.size(), fnv1a64_hex(content)});
    }

    void finish(bool ok, const std::string& failure) {
        json m;
        m["tool"] = kToolVersion;
        m["platform"] = platform_note();
        m["name"] = name_;
        if (!comment_.empty()) m["comment"] = comment_;
        m["config_fnv1a64"] = config_digest_;
        m["status"] = ok ? "ok" : "failed";
        if (!failure.empty()) m["failure"] = failure;
        m["started_utc"] = started_;
        m["finished_utc"] = utc_now();
        json files = json::array();
        for (const Entry& e : files_)
            files.push_back({{"path", e.path}, {"bytes", e.bytes}, {"fnv1a64", e.digest}});
        m["files"] = files;
        write_file_atomic(dir_ + "/manifest.json", m.dump(2) + "\n");
    }

  private:
    struct Entry {
        std::string path;
        std::size_t bytes;
        std::string digest;
    };
    std::string dir_, name_, comment_, config_digest_, started_;
    std::vector<Entry> files_;
};

json sets_to_json(const std::vector<std::vector<int>>& sets) {
    json a = json::array();
    for (const auto& s : sets) a.push_back(s);
    return a;
}

// One JSONL line per epoch block (every kEpochBlock epochs plus the final
// epoch) keeps full-length runs auditable without gigabyte logs.
constexpr std::int64_t kEpochBlock = 100;

void append_history(std::string& jsonl, const AdaptiveStep& s) {
    const std::vector<EpochRecord>& rec = s.training.records;
    for (std::size_t i = 0; i < rec.size(); ++i) {
        if (rec[i].epoch % kEpochBlock != 0 && i + 1 != rec.size()) continue;
        json line;
        line["type"] = "epoch";
        line["It"] = s.iteration;
        line["epoch"] = rec[i].epoch;
        line["lr"] = rec[i].lr;
        line["total"] = rec[i].loss.total;
        line["interior"] = rec[i].loss.interior;
        line["boundary"] = rec[i].loss.boundary;
        if (rec[i].loss.initial_velocity != 0) line["initial_velocity"] = rec[i].loss.initial_velocity;
        if (rec[i].mu != 0) line["mu"] = rec[i].mu;
        jsonl += line.dump() + "\n";
    }
    json line;
    line["type"] = "step";
    line["It"] = s.iteration;
    line["step_seed"] = s.step_seed;
    line["epochs_run"] = s.training.epochs_run;
    line["aborted"] = s.training.aborted;
    line["e_rel"] = s.e_rel;
    line["dft_samples"] = s.dft_samples;
    line["wall_seconds"] = s.wall_seconds;
    line["used"] = sets_to_json(s.used.sets);
    line["extracted"] = sets_to_json(s.extracted.sets);
    jsonl += line.dump() + "\n";
}

std::string spectrum_csv(const AdaptiveStep& s) {
    std::string csv = "It,i,k,mean_magnitude\n";
    for (std::size_t dim = 0; dim < s.averaged.size(); ++dim)
        for (std::size_t k = 0; k < s.averaged[dim].magnitude.size(); ++k)
            csv += std::to_string(s.iteration) + "," + std::to_string(dim) + "," +
                   std::to_string(k) + "," + format_double(s.averaged[dim].magnitude[k]) + "\n";
    return csv;
}

std::string grid_csv(const std::vector<double>& grid) {
    std::string csv;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        csv += format_double(grid[i]);
        csv += (i % 40 == 39) ? '\n' : ',';
    }
    return csv;
}

// Error-per-step table in the layout of the printed tables: one row per run,
// one column per adaptive step.
std::string summary_csv(const std::string& name, int iterations, const RunHistory& hist) {
    std::string csv = "name";
    for (int it = 0; it <= iterations; ++it) csv += ",It" + std::to_string(it);
    csv += "\n" + name;
    for (int it = 0; it <= iterations; ++it) {
        csv += ",";
        if (it < static_cast<int>(hist.steps.size())) csv += format_double(hist.steps[it].e_rel);
    }
    csv += "\n";
    return csv;
}

int fit_toy(const RunConfig& cfg, ArtifactSink& sink, std::ostream& out) {
    ToyFitResult res = toy_fit(cfg.toy);
    std::string csv = "epoch,direction,k,delta\n";
    for (const ToySnapshot& s : res.snapshots)
        for (int dir = 0; dir < 2; ++dir) {
            const std::vector<double>& d = dir == 0 ? s.delta_x : s.delta_y;
            for (std::size_t j = 0; j < res.ks.size(); ++j)
                csv += std::to_string(s.epoch) + "," + (dir == 0 ? "x" : "y") + "," +
                       std::to_string(res.ks[j]) + "," + format_double(d[j]) + "\n";
        }
    sink.write("toy.csv", csv);

    std::string fb = "direction,k,first_epoch_below\n";
    for (int dir = 0; dir < 2; ++dir) {
        const std::vector<std::int64_t>& f = dir == 0 ? res.first_below_x : res.first_below_y;
        for (std::size_t j = 0; j < res.ks.size(); ++j)
            fb += std::string(dir == 0 ? "x" : "y") + "," + std::to_string(res.ks[j]) + "," +
                  std::to_string(f[j]) + "\n";
    }
    sink.write("first_below.csv", fb);
    if (cfg.output.checkpoints && res.model) sink.write("model.json", res.model->to_json().dump() + "\n");
    out << "toy fit: " << res.snapshots.size() << " snapshots -> " << sink.dir() << "\n";
    return kExitOk;
}

int fit_ff_compare(const RunConfig& cfg, ArtifactSink& sink, std::ostream& out, std::ostream& err) {
    const FfCompareConfig& f = cfg.ff;
    std::string csv = "k,architecture,e_rel\n";
    std::string jsonl;
    bool any_aborted = false;
    for (std::size_t ki = 0; ki < f.ks.size(); ++ki) {
        int k = f.ks[ki];
        ProblemSpec prob = make_poisson_two_scale(f.dims, k);
        prob.lambda_b = f.lambda_b;
        prob.n_interior = f.n_interior;
        prob.n_boundary_per_face = f.n_boundary_per_face;
        ManufacturedReport rep = verify_manufactured(prob, 64, 20240601);
        if (!rep.pass) {
            err << "manufactured-solution check failed for k = " << k << "\n";
            sink.finish(false, "manufactured-solution check failed");
            return kExitVerificationFailure;
        }
        for (const std::string& arch : f.architectures) {
            ModelConfig mc;
            mc.dims = f.dims;
            mc.combiner = arch.rfind("tt", 0) == 0 ? Combiner::Tt : Combiner::Cp;
            mc.rank = f.rank;
            if (mc.combiner == Combiner::Tt) mc.tt_ranks = f.tt_ranks;
            bool ff = arch.size() > 3 && arch.substr(arch.size() - 3) == "-ff";
            mc.hidden = ff ? f.hidden_ff : f.hidden;
            mc.activation = f.activation;
            mc.bias_init_std = f.bias_init_std;
            mc.feature.mode = ff ? FeatureMode::Random : FeatureMode::None;
            mc.feature.m = f.m;
            mc.feature.sigma = {f.sigma};
            mc.seed = f.seed;
            TnnModel model = TnnModel::init(mc);
            TrainConfig tc;
            tc.epochs = f.epochs;
            tc.sched = f.sched;
            tc.seed = f.seed;
            TrainResult tr = train(prob, model, tc);
            any_aborted = any_aborted || tr.aborted;
            double e_rel = relative_l2(prob, model, f.eval_n,
                                       derive_seed(f.seed, seed_stream::kEval, ki));
            csv += std::to_string(k) + "," + arch + "," + format_double(e_rel) + "\n";
            json line;
            line["k"] = k;
            line["architecture"] = arch;
            line["epochs_run"] = tr.epochs_run;
            line["aborted"] = tr.aborted;
            line["e_rel"] = e_rel;
            if (!tr.records.empty()) line["final_loss"] = tr.records.back().loss.total;
            jsonl += line.dump() + "\n";
            out << "k = " << k << "  " << arch << "  e_rel = " << format_double(e_rel) << "\n";
        }
    }
    sink.write("ff_compare.csv", csv);
    sink.write("history.jsonl", jsonl);
    if (any_aborted) {
        sink.finish(false, "at least one training run aborted on non-finite loss");
        err << "at least one training run aborted on non-finite loss\n";
        return kExitRuntimeFailure;
    }
    return kExitOk;
}

int fit_theorem1(const RunConfig& cfg, ArtifactSink& sink, std::ostream& out) {
    const Theorem1SweepConfig& t = cfg.theorem1;
    std::string csv = "delta,fraction\n";
    for (std::size_t i = 0; i < t.deltas.size(); ++i) {
        double frac = theorem1_measure_estimate(t.probe, t.deltas[i], t.n,
                                                derive_seed(t.seed, seed_stream::kEval, i));
        csv += format_double(t.deltas[i]) + "," + format_double(frac) + "\n";
        out << "delta = " << format_double(t.deltas[i]) << "  fraction = " << format_double(frac)
            << "\n";
    }
    sink.write("theorem1.csv", csv);
    return kExitOk;
}

}  // namespace

std::string output_root() {
    const char* env = std::getenv(kOutputRootEnv);
    if (env && *env) return env;
    return "out";
}

int cmd_solve(const std::string& config_path, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    std::string raw;
    try {
        raw = read_file(config_path);
        cfg = load_run_config(config_path);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }
    if (cfg.mode != "solve") {
        err << "config error: " << config_path << ": mode is \"" << cfg.mode
            << "\", expected \"solve\"\n";
        return kExitConfigError;
    }
    ArtifactSink sink(output_root() + "/" + cfg.output.dir, cfg, fnv1a64_hex(raw));
    try {
        ManufacturedReport rep = verify_manufactured(cfg.problem, 64, 20240601);
        if (!rep.pass) {
            std::ostringstream msg;
            msg << "manufactured-solution check failed for problem \"" << cfg.problem.name
                << "\": residual_rel = " << rep.max_residual_rel
                << ", fd_residual_rel = " << rep.max_fd_residual_rel
                << ", derivative_mismatch = " << rep.max_derivative_mismatch;
            err << msg.str() << "\n";
            sink.finish(false, msg.str());
            return kExitVerificationFailure;
        }

        std::string jsonl;
        const std::uint64_t run_seed = cfg.adaptive.model.seed;
        RunHistory hist = adaptive_solve(
            cfg.problem, cfg.adaptive, [&](const AdaptiveStep& s, const TnnModel& model) {
                append_history(jsonl, s);
                std::string tag = "It" + std::to_string(s.iteration);
                sink.write("spectrum_" + tag + ".csv", spectrum_csv(s));
                sink.write("freqsets_" + tag + ".json",
                           freqsets_to_json(s.extracted).dump() + "\n");
                if (cfg.output.checkpoints)
                    sink.write("model_" + tag + ".json", model.to_json().dump() + "\n");
                if (cfg.output.grid)
                    sink.write("grid_" + tag + ".csv",
                               grid_csv(pointwise_error_grid(
                                   cfg.problem, model,
                                   derive_seed(run_seed, seed_stream::kGrid,
                                               static_cast<std::uint64_t>(s.iteration)))));
                out << tag << "  e_rel = " << format_double(s.e_rel) << "  ("
                    << s.training.epochs_run << " epochs, " << format_double(s.wall_seconds)
                    << " s)\n";
            });
        sink.write("history.jsonl", jsonl);
        sink.write("summary.csv", summary_csv(cfg.name, cfg.adaptive.iterations, hist));
        if (hist.aborted) {
            err << "training aborted on non-finite loss; partial artifacts in " << sink.dir()
                << "\n";
            sink.finish(false, "training aborted on non-finite loss");
            return kExitRuntimeFailure;
        }
        if (hist.stopped_early)
            out << "stopped early: extracted frequency sets reproduced the sets in use\n";
        sink.finish(true, "");
        out << "artifacts in " << sink.dir() << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << "\n";
        sink.finish(false, e.what());
        return kExitRuntimeFailure;
    }
}

int cmd_fit(const std::string& config_path, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    std::string raw;
    try {
        raw = read_file(config_path);
        cfg = load_run_config(config_path);
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }
    if (cfg.mode != "fit") {
        err << "config error: " << config_path << ": mode is \"" << cfg.mode
            << "\", expected \"fit\"\n";
        return kExitConfigError;
    }
    ArtifactSink sink(output_root() + "/" + cfg.output.dir, cfg, fnv1a64_hex(raw));
    try {
        int status = kExitOk;
        if (cfg.fit_kind == "toy")
            status = fit_toy(cfg, sink, out);
        else if (cfg.fit_kind == "ff-compare")
            status = fit_ff_compare(cfg, sink, out, err);
        else
            status = fit_theorem1(cfg, sink, out);
        if (status == kExitOk) {
            sink.finish(true, "");
            out << "artifacts in " << sink.dir() << "\n";
        }
        return status;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << "\n";
        sink.finish(false, e.what());
        return kExitRuntimeFailure;
    }
}

int cmd_verify(bool quick, std::ostream& out, std::ostream& err) {
    try {
        VerifyReport rep = run_verification(424242, quick);
        print_report(rep, out);
        return rep.all_pass ? kExitOk : kExitVerificationFailure;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << "\n";
        return kExitRuntimeFailure;
    }
}

int cmd_spectrum(const std::string& checkpoint_path, int iteration, int dft_n, std::ostream& out,
                 std::ostream& err) {
    if (dft_n < 2 || (dft_n & (dft_n - 1))) {
        err << "config error: dft_n must be a power of two >= 2\n";
        return kExitConfigError;
    }
    std::optional<TnnModel> model;
    try {
        model.emplace(TnnModel::load(checkpoint_path));
    } catch (const std::exception& e) {
        err << "config error: cannot load checkpoint " << checkpoint_path << ": " << e.what()
            << "\n";
        return kExitConfigError;
    }
    try {
        out << "It,i,k,mean_magnitude\n";
        for (int dim = 0; dim < model->dims(); ++dim) {
            DimensionSpectra ds = dimension_spectra(*model, dim, dft_n);
            for (std::size_t k = 0; k < ds.average.magnitude.size(); ++k)
                out << iteration << "," << dim << "," << k << ","
                    << format_double(ds.average.magnitude[k]) << "\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << "\n";
        return kExitRuntimeFailure;
    }
}

}  // namespace tnn
