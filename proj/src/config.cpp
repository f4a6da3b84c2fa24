#include "tnn/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "tnn/io.hpp"

namespace tnn {
namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

// Wraps one JSON object; every key must be consumed through take()/require()
// so finish() can reject leftovers by full path.
class ObjectReader {
  public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    const json* take(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        used_.insert(key);
        return &*it;
    }
    const json& require(const char* key) {
        const json* p = take(key);
        if (!p) fail(join(path_, key), "missing required key");
        return *p;
    }
    std::string key_path(const char* key) const { return join(path_, key); }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) fail(join(path_, it.key()), "unknown key");
    }

  private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

double as_double(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "expected a finite number");
    return d;
}

std::int64_t as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<std::int64_t>();
}

std::int64_t as_int_min(const json& v, const std::string& path, std::int64_t lo) {
    std::int64_t n = as_int(v, path);
    if (n < lo) fail(path, "expected an integer >= " + std::to_string(lo));
    return n;
}

std::uint64_t as_seed(const json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0))
        fail(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(path, "expected a boolean");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

std::vector<int> as_int_list(const json& v, const std::string& path, std::int64_t lo) {
    if (!v.is_array()) fail(path, "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(static_cast<int>(as_int_min(v[i], path + "[" + std::to_string(i) + "]", lo)));
    return out;
}

std::vector<double> as_double_list(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(as_double(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

LrSchedule parse_lr(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    LrSchedule s;
    if (const json* p = r.take("base")) s.base = as_double(*p, r.key_path("base"));
    if (const json* p = r.take("decay")) s.decay = as_double(*p, r.key_path("decay"));
    if (const json* p = r.take("every")) s.every = as_int_min(*p, r.key_path("every"), 1);
    r.finish();
    if (s.base <= 0) fail(join(path, "base"), "expected a positive number");
    if (s.decay <= 0 || s.decay > 1) fail(join(path, "decay"), "expected a value in (0, 1]");
    return s;
}

FeatureSpec parse_feature(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    FeatureSpec f;
    std::string mode = as_string(r.require("mode"), r.key_path("mode"));
    if (mode == "none") {
        f.mode = FeatureMode::None;
    } else if (mode == "random") {
        f.mode = FeatureMode::Random;
        f.m = static_cast<int>(as_int_min(r.require("m"), r.key_path("m"), 1));
        const json& sig = r.require("sigma");
        f.sigma = sig.is_array() ? as_double_list(sig, r.key_path("sigma"))
                                 : std::vector<double>{as_double(sig, r.key_path("sigma"))};
        for (double s : f.sigma)
            if (s <= 0) fail(r.key_path("sigma"), "expected positive entries");
        if (f.sigma.empty()) fail(r.key_path("sigma"), "expected at least one entry");
    } else if (mode == "adapted") {
        f.mode = FeatureMode::Adapted;
        const json& sets = r.require("sets");
        if (!sets.is_array()) fail(r.key_path("sets"), "expected an array of integer arrays");
        for (std::size_t i = 0; i < sets.size(); ++i)
            f.adapted.push_back(
                as_int_list(sets[i], r.key_path("sets") + "[" + std::to_string(i) + "]", 1));
    } else {
        fail(r.key_path("mode"), "expected one of none|random|adapted");
    }
    r.finish();
    return f;
}

ModelConfig parse_model(const json& j, const std::string& path, int dims) {
    ObjectReader r(j, path);
    ModelConfig m;
    m.dims = dims;
    std::string combiner = as_string(r.require("combiner"), r.key_path("combiner"));
    if (combiner == "cp") {
        m.combiner = Combiner::Cp;
        m.rank = static_cast<int>(as_int_min(r.require("rank"), r.key_path("rank"), 1));
    } else if (combiner == "tt") {
        m.combiner = Combiner::Tt;
        m.tt_ranks = as_int_list(r.require("tt_ranks"), r.key_path("tt_ranks"), 1);
        if (static_cast<int>(m.tt_ranks.size()) != dims - 1)
            fail(r.key_path("tt_ranks"), "expected " + std::to_string(dims - 1) +
                                             " interior ranks for a " + std::to_string(dims) +
                                             "-dimensional model");
    } else {
        fail(r.key_path("combiner"), "expected cp or tt");
    }
    m.hidden = as_int_list(r.require("hidden"), r.key_path("hidden"), 1);
    if (const json* p = r.take("activation")) {
        std::string name = as_string(*p, r.key_path("activation"));
        try {
            m.activation = activation_from_string(name);
        } catch (const std::invalid_argument&) {
            fail(r.key_path("activation"), "expected one of tanh|sin|cos|trigblend");
        }
    }
    if (const json* p = r.take("activate_output"))
        m.activate_output = as_bool(*p, r.key_path("activate_output"));
    if (const json* p = r.take("bias_init_std")) {
        m.bias_init_std = as_double(*p, r.key_path("bias_init_std"));
        if (m.bias_init_std < 0) fail(r.key_path("bias_init_std"), "expected >= 0");
    }
    if (const json* p = r.take("feature"))
        m.feature = parse_feature(*p, r.key_path("feature"));
    else
        m.feature.mode = FeatureMode::None;
    r.finish();
    return m;
}

TrainConfig parse_train(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    TrainConfig t;
    t.epochs = as_int_min(r.require("epochs"), r.key_path("epochs"), 0);
    if (const json* p = r.take("lr")) t.sched = parse_lr(*p, r.key_path("lr"));
    if (const json* p = r.take("resample_every_epoch"))
        t.resample_every_epoch = as_bool(*p, r.key_path("resample_every_epoch"));
    r.finish();
    return t;
}

void parse_adaptive(const json& j, const std::string& path, AdaptiveConfig& a) {
    ObjectReader r(j, path);
    if (const json* p = r.take("iterations"))
        a.iterations = static_cast<int>(as_int_min(*p, r.key_path("iterations"), 0));
    if (const json* p = r.take("top_m"))
        a.top_m = static_cast<int>(as_int_min(*p, r.key_path("top_m"), 1));
    if (const json* p = r.take("dft_n")) {
        a.dft_n = static_cast<int>(as_int_min(*p, r.key_path("dft_n"), 2));
        if (a.dft_n & (a.dft_n - 1)) fail(r.key_path("dft_n"), "expected a power of two");
    }
    if (const json* p = r.take("union_cap"))
        a.union_cap = static_cast<std::size_t>(as_int_min(*p, r.key_path("union_cap"), 1));
    if (const json* p = r.take("stop_on_equal"))
        a.stop_on_equal = as_bool(*p, r.key_path("stop_on_equal"));
    if (const json* p = r.take("jaccard_stop")) {
        a.jaccard_stop = as_double(*p, r.key_path("jaccard_stop"));
        if (a.jaccard_stop < 0 || a.jaccard_stop > 1)
            fail(r.key_path("jaccard_stop"), "expected a value in [0, 1]");
    }
    if (const json* p = r.take("eval_n"))
        a.eval_n = static_cast<std::size_t>(as_int_min(*p, r.key_path("eval_n"), 1));
    r.finish();
}

ProblemSpec parse_problem(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    std::string kind = as_string(r.require("kind"), r.key_path("kind"));
    ProblemSpec prob;
    if (kind == "poisson3d-product") {
        int k1 = 2, k2 = 16;
        if (const json* p = r.take("k1")) k1 = static_cast<int>(as_int_min(*p, r.key_path("k1"), 1));
        if (const json* p = r.take("k2")) k2 = static_cast<int>(as_int_min(*p, r.key_path("k2"), 1));
        prob = make_poisson_product3(k1, k2);
    } else if (kind == "poisson12d-additive") {
        std::vector<int> ks = as_int_list(r.require("ks"), r.key_path("ks"), 1);
        std::vector<double> amps = as_double_list(r.require("amps"), r.key_path("amps"));
        if (ks.size() != amps.size())
            fail(r.key_path("amps"), "expected the same length as ks");
        prob = make_poisson_additive12(std::move(ks), std::move(amps));
    } else if (kind == "poisson-two-scale") {
        int d = static_cast<int>(as_int_min(r.require("dims"), r.key_path("dims"), 1));
        int k = static_cast<int>(as_int_min(r.require("k"), r.key_path("k"), 1));
        prob = make_poisson_two_scale(d, k);
    } else if (kind == "poisson-product") {
        prob = make_poisson_product_single(as_int_list(r.require("ks"), r.key_path("ks"), 1));
    } else if (kind == "heat6d" || kind == "wave6d" || kind == "wave1d") {
        bool corrected = true;
        if (const json* p = r.take("corrected")) corrected = as_bool(*p, r.key_path("corrected"));
        prob = kind == "heat6d"   ? make_heat6(corrected)
               : kind == "wave6d" ? make_wave6(corrected)
                                  : make_wave1(corrected);
    } else if (kind == "helmholtz6d") {
        double lambda = 1.0;
        if (const json* p = r.take("lambda")) lambda = as_double(*p, r.key_path("lambda"));
        prob = make_helmholtz6(lambda);
    } else if (kind == "fit-axes") {
        prob = make_fit_axes(as_int_list(r.require("ks"), r.key_path("ks"), 1));
    } else {
        fail(r.key_path("kind"),
             "expected one of poisson3d-product|poisson12d-additive|poisson-two-scale|"
             "poisson-product|heat6d|wave6d|wave1d|helmholtz6d|fit-axes");
    }
    if (const json* p = r.take("lambda_b")) {
        prob.lambda_b = as_double(*p, r.key_path("lambda_b"));
        if (prob.lambda_b < 0) fail(r.key_path("lambda_b"), "expected >= 0");
    }
    if (const json* p = r.take("omega_ut")) {
        prob.omega_ut = as_double(*p, r.key_path("omega_ut"));
        if (prob.omega_ut < 0) fail(r.key_path("omega_ut"), "expected >= 0");
    }
    if (const json* p = r.take("n_interior"))
        prob.n_interior = static_cast<std::size_t>(as_int_min(*p, r.key_path("n_interior"), 1));
    if (const json* p = r.take("n_boundary_per_face"))
        prob.n_boundary_per_face =
            static_cast<std::size_t>(as_int_min(*p, r.key_path("n_boundary_per_face"), 0));
    if (const json* p = r.take("n_initial"))
        prob.n_initial = static_cast<std::size_t>(as_int_min(*p, r.key_path("n_initial"), 0));
    if (const json* p = r.take("top_m"))
        prob.top_m = static_cast<int>(as_int_min(*p, r.key_path("top_m"), 1));
    if (const json* p = r.take("t_final")) {
        prob.t_final = as_double(*p, r.key_path("t_final"));
        if (prob.t_final <= 0) fail(r.key_path("t_final"), "expected > 0");
    }
    r.finish();
    return prob;
}

void parse_fit_toy(ObjectReader& r, ToyFitConfig& t) {
    if (const json* p = r.take("rank"))
        t.rank = static_cast<int>(as_int_min(*p, r.key_path("rank"), 1));
    if (const json* p = r.take("epochs")) t.epochs = as_int_min(*p, r.key_path("epochs"), 1);
    if (const json* p = r.take("batch"))
        t.batch = static_cast<std::size_t>(as_int_min(*p, r.key_path("batch"), 1));
    if (const json* p = r.take("record_every"))
        t.record_every = static_cast<int>(as_int_min(*p, r.key_path("record_every"), 1));
    if (const json* p = r.take("dft_n")) {
        t.dft_n = static_cast<int>(as_int_min(*p, r.key_path("dft_n"), 2));
        if (t.dft_n & (t.dft_n - 1)) fail(r.key_path("dft_n"), "expected a power of two");
    }
    if (const json* p = r.take("ks")) t.ks = as_int_list(*p, r.key_path("ks"), 1);
    if (t.ks.empty()) fail(r.key_path("ks"), "expected at least one frequency");
    if (const json* p = r.take("threshold")) {
        t.threshold = as_double(*p, r.key_path("threshold"));
        if (t.threshold <= 0) fail(r.key_path("threshold"), "expected > 0");
    }
    if (const json* p = r.take("lr")) t.sched = parse_lr(*p, r.key_path("lr"));
    if (const json* p = r.take("bias_init_std")) {
        t.bias_init_std = as_double(*p, r.key_path("bias_init_std"));
        if (t.bias_init_std < 0) fail(r.key_path("bias_init_std"), "expected >= 0");
    }
    if (const json* p = r.take("init_scale")) {
        t.init_scale = as_double(*p, r.key_path("init_scale"));
        if (t.init_scale <= 0) fail(r.key_path("init_scale"), "expected > 0");
    }
}

void parse_fit_ff(ObjectReader& r, FfCompareConfig& f) {
    if (const json* p = r.take("dims"))
        f.dims = static_cast<int>(as_int_min(*p, r.key_path("dims"), 2));
    if (const json* p = r.take("ks")) f.ks = as_int_list(*p, r.key_path("ks"), 1);
    if (f.ks.empty()) fail(r.key_path("ks"), "expected at least one frequency");
    if (const json* p = r.take("rank"))
        f.rank = static_cast<int>(as_int_min(*p, r.key_path("rank"), 1));
    if (const json* p = r.take("tt_ranks")) f.tt_ranks = as_int_list(*p, r.key_path("tt_ranks"), 1);
    if (const json* p = r.take("hidden")) f.hidden = as_int_list(*p, r.key_path("hidden"), 1);
    if (const json* p = r.take("hidden_ff"))
        f.hidden_ff = as_int_list(*p, r.key_path("hidden_ff"), 1);
    if (const json* p = r.take("activation")) {
        std::string name = as_string(*p, r.key_path("activation"));
        try {
            f.activation = activation_from_string(name);
        } catch (const std::invalid_argument&) {
            fail(r.key_path("activation"), "expected one of tanh|sin|cos|trigblend");
        }
    }
    if (const json* p = r.take("bias_init_std")) {
        f.bias_init_std = as_double(*p, r.key_path("bias_init_std"));
        if (f.bias_init_std < 0) fail(r.key_path("bias_init_std"), "expected >= 0");
    }
    if (const json* p = r.take("m")) f.m = static_cast<int>(as_int_min(*p, r.key_path("m"), 1));
    if (const json* p = r.take("sigma")) {
        f.sigma = as_double(*p, r.key_path("sigma"));
        if (f.sigma <= 0) fail(r.key_path("sigma"), "expected > 0");
    }
    if (const json* p = r.take("epochs")) f.epochs = as_int_min(*p, r.key_path("epochs"), 1);
    if (const json* p = r.take("lr")) f.sched = parse_lr(*p, r.key_path("lr"));
    if (const json* p = r.take("n_interior"))
        f.n_interior = static_cast<std::size_t>(as_int_min(*p, r.key_path("n_interior"), 1));
    if (const json* p = r.take("n_boundary_per_face"))
        f.n_boundary_per_face =
            static_cast<std::size_t>(as_int_min(*p, r.key_path("n_boundary_per_face"), 0));
    if (const json* p = r.take("lambda_b")) {
        f.lambda_b = as_double(*p, r.key_path("lambda_b"));
        if (f.lambda_b < 0) fail(r.key_path("lambda_b"), "expected >= 0");
    }
    if (const json* p = r.take("eval_n"))
        f.eval_n = static_cast<std::size_t>(as_int_min(*p, r.key_path("eval_n"), 1));
    if (const json* p = r.take("architectures")) {
        if (!p->is_array()) fail(r.key_path("architectures"), "expected an array of strings");
        f.architectures.clear();
        for (std::size_t i = 0; i < p->size(); ++i) {
            std::string arch =
                as_string((*p)[i], r.key_path("architectures") + "[" + std::to_string(i) + "]");
            if (arch != "cp" && arch != "cp-ff" && arch != "tt" && arch != "tt-ff")
                fail(r.key_path("architectures") + "[" + std::to_string(i) + "]",
                     "expected one of cp|cp-ff|tt|tt-ff");
            if (std::find(f.architectures.begin(), f.architectures.end(), arch) !=
                f.architectures.end())
                fail(r.key_path("architectures") + "[" + std::to_string(i) + "]",
                     "duplicate architecture");
            f.architectures.push_back(arch);
        }
        if (f.architectures.empty())
            fail(r.key_path("architectures"), "expected at least one architecture");
    }
    bool wants_tt = std::any_of(f.architectures.begin(), f.architectures.end(),
                                [](const std::string& a) { return a == "tt" || a == "tt-ff"; });
    if (wants_tt && static_cast<int>(f.tt_ranks.size()) != f.dims - 1)
        fail(r.key_path("tt_ranks"), "expected " + std::to_string(f.dims - 1) +
                                         " interior ranks for the tt architectures");
}

void parse_fit_theorem1(ObjectReader& r, Theorem1SweepConfig& t) {
    if (const json* p = r.take("deltas")) {
        t.deltas = as_double_list(*p, r.key_path("deltas"));
        if (t.deltas.empty()) fail(r.key_path("deltas"), "expected at least one value");
        for (double d : t.deltas)
            if (d <= 0) fail(r.key_path("deltas"), "expected positive entries");
    }
    if (const json* p = r.take("n"))
        t.n = static_cast<std::size_t>(as_int_min(*p, r.key_path("n"), 1));
    auto pair = [&](const char* key, double& x, double& y) {
        if (const json* p = r.take(key)) {
            std::vector<double> v = as_double_list(*p, r.key_path(key));
            if (v.size() != 2) fail(r.key_path(key), "expected two entries");
            x = v[0];
            y = v[1];
        }
    };
    pair("k1", t.probe.k1x, t.probe.k1y);
    pair("k2", t.probe.k2x, t.probe.k2y);
    pair("b", t.probe.bx, t.probe.by);
    if (const json* p = r.take("a")) t.probe.a = as_double(*p, r.key_path("a"));
    if (const json* p = r.take("target1"))
        t.probe.target1 = as_double(*p, r.key_path("target1"));
    if (const json* p = r.take("target2"))
        t.probe.target2 = as_double(*p, r.key_path("target2"));
}

OutputConfig parse_output(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    OutputConfig o;
    if (const json* p = r.take("dir")) o.dir = as_string(*p, r.key_path("dir"));
    if (const json* p = r.take("grid")) o.grid = as_bool(*p, r.key_path("grid"));
    if (const json* p = r.take("checkpoints")) o.checkpoints = as_bool(*p, r.key_path("checkpoints"));
    r.finish();
    return o;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    ObjectReader r(j, "");
    RunConfig cfg;
    cfg.mode = as_string(r.require("mode"), "mode");
    if (cfg.mode != "solve" && cfg.mode != "fit") fail("mode", "expected solve or fit");
    cfg.name = as_string(r.require("name"), "name");
    if (cfg.name.empty()) fail("name", "expected a non-empty string");
    if (const json* p = r.take("comment")) cfg.comment = as_string(*p, "comment");
    std::uint64_t seed = 1;
    if (const json* p = r.take("seed")) seed = as_seed(*p, "seed");

    if (cfg.mode == "solve") {
        cfg.problem = parse_problem(r.require("problem"), "problem");
        cfg.adaptive.model = parse_model(r.require("model"), "model", cfg.problem.input_dims());
        cfg.adaptive.model.seed = seed;
        cfg.adaptive.train = parse_train(r.require("train"), "train");
        cfg.adaptive.train.seed = seed;
        if (const json* p = r.take("adaptive")) parse_adaptive(*p, "adaptive", cfg.adaptive);
    } else {
        const json& fj = r.require("fit");
        ObjectReader fr(fj, "fit");
        cfg.fit_kind = as_string(fr.require("kind"), "fit.kind");
        if (cfg.fit_kind == "toy") {
            cfg.toy.seed = seed;
            parse_fit_toy(fr, cfg.toy);
        } else if (cfg.fit_kind == "ff-compare") {
            cfg.ff.seed = seed;
            parse_fit_ff(fr, cfg.ff);
        } else if (cfg.fit_kind == "theorem1") {
            cfg.theorem1.seed = seed;
            parse_fit_theorem1(fr, cfg.theorem1);
        } else {
            fail("fit.kind", "expected one of toy|ff-compare|theorem1");
        }
        fr.finish();
    }

    if (const json* p = r.take("output")) cfg.output = parse_output(*p, "output");
    if (cfg.output.dir.empty()) cfg.output.dir = cfg.name;
    r.finish();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    try {
        return parse_run_config(j);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace tnn
