#include "lift/config.hpp"

#include <set>

#include <json.hpp>

namespace lift {

using json = nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& path) {
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.contains(key))
            throw ConfigError("unknown key: " + path + key);
    }
}

double get_number(const json& obj, const std::string& key, double fallback,
                  const std::string& path) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number())
        throw ConfigError("type mismatch: " + path + key + " must be a number");
    return obj[key].get<double>();
}

std::uint64_t get_uint(const json& obj, const std::string& key, std::uint64_t fallback,
                       const std::string& path) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_unsigned())
        throw ConfigError("type mismatch: " + path + key +
                          " must be a non-negative integer");
    return obj[key].get<std::uint64_t>();
}

std::string get_string(const json& obj, const std::string& key, std::string fallback,
                       const std::string& path) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string())
        throw ConfigError("type mismatch: " + path + key + " must be a string");
    return obj[key].get<std::string>();
}

RankVariant parse_rank_variant(const std::string& name, const std::string& path) {
    if (name == "largest") return RankVariant::Largest;
    if (name == "smallest") return RankVariant::Smallest;
    if (name == "random") return RankVariant::Random;
    if (name == "hybrid") return RankVariant::Hybrid;
    throw ConfigError("out-of-range value: " + path +
                      " must be one of largest|smallest|random|hybrid");
}

std::string rank_variant_name(RankVariant v) {
    switch (v) {
        case RankVariant::Largest: return "largest";
        case RankVariant::Smallest: return "smallest";
        case RankVariant::Random: return "random";
        case RankVariant::Hybrid: return "hybrid";
    }
    return "largest";
}

AdamHyperparams parse_adam(const json& obj, AdamHyperparams defaults,
                           const std::string& path, bool has_interval) {
    std::set<std::string> allowed = {"lr",           "beta1", "beta2",
                                     "eps",          "weight_decay", "total_steps"};
    if (has_interval) allowed.insert("update_mask_interval");
    reject_unknown_keys(obj, allowed, path);

    AdamHyperparams hp = defaults;
    hp.lr = get_number(obj, "lr", hp.lr, path);
    hp.beta1 = get_number(obj, "beta1", hp.beta1, path);
    hp.beta2 = get_number(obj, "beta2", hp.beta2, path);
    hp.eps = get_number(obj, "eps", hp.eps, path);
    hp.weight_decay = get_number(obj, "weight_decay", hp.weight_decay, path);
    hp.total_steps = get_uint(obj, "total_steps", hp.total_steps, path);
    if (has_interval) {
        hp.update_mask_interval =
            get_uint(obj, "update_mask_interval", hp.update_mask_interval, path);
        if (hp.update_mask_interval == 0)
            throw ConfigError("out-of-range value: " + path +
                              "update_mask_interval must be >= 1");
    }
    try {
        hp.validate();
    } catch (const OptimizerError& e) {
        throw ConfigError("out-of-range value: " + path + e.what());
    }
    return hp;
}

BudgetSpec parse_budget(const json& obj, const std::string& path) {
    reject_unknown_keys(obj, {"k", "lora_rank"}, path);
    if (obj.contains("k") == obj.contains("lora_rank"))
        throw ConfigError(path + " must set exactly one of k | lora_rank");
    if (obj.contains("k")) {
        const auto k = get_uint(obj, "k", 0, path);
        if (k == 0) throw ConfigError("out-of-range value: " + path + "k must be >= 1");
        return BudgetSpec::exact(k);
    }
    const auto rho = get_uint(obj, "lora_rank", 0, path);
    if (rho == 0)
        throw ConfigError("out-of-range value: " + path + "lora_rank must be >= 1");
    return BudgetSpec::lora_rank(rho);
}

json budget_to_json(const BudgetSpec& b) {
    json obj;
    if (b.k_exact) obj["k"] = *b.k_exact;
    if (b.lora_rank_equivalent) obj["lora_rank"] = *b.lora_rank_equivalent;
    return obj;
}

struct ParsedMethod {
    MethodSpec spec;
    bool is_full = false;
};

MethodSpec parse_method(const json& obj, const std::string& path) {
    reject_unknown_keys(
        obj, {"name", "kind", "rank", "rank_variant", "rank_seed", "seed", "block", "budget"},
        path);
    MethodSpec m;
    m.name = get_string(obj, "name", "", path);
    const auto kind = get_string(obj, "kind", "", path);
    if (m.name.empty()) throw ConfigError(path + "name is required");
    if (kind.empty()) throw ConfigError(path + "kind is required");

    if (kind == "full") {
        m.full_finetune = true;
        return m;
    }
    const int rank = static_cast<int>(get_uint(obj, "rank", 16, path));
    const auto variant =
        parse_rank_variant(get_string(obj, "rank_variant", "largest", path),
                           path + "rank_variant");
    const auto rank_seed = get_uint(obj, "rank_seed", 0, path);
    const auto seed = get_uint(obj, "seed", 0, path);
    const int block = static_cast<int>(get_uint(obj, "block", 4, path));
    m.strategy = parse_strategy_name(kind, rank, rank_variant_name(variant), seed, block);
    m.strategy.rank_selection.seed = rank_seed;

    if (!obj.contains("budget")) throw ConfigError(path + "budget is required");
    m.budget = parse_budget(obj["budget"], path + "budget.");
    return m;
}

json method_to_json(const MethodSpec& m) {
    json obj;
    obj["name"] = m.name;
    if (m.full_finetune) {
        obj["kind"] = "full";
        return obj;
    }
    switch (m.strategy.kind) {
        case SelectionKind::Lift: obj["kind"] = "lift"; break;
        case SelectionKind::WeightMagnitude: obj["kind"] = "weight-magnitude"; break;
        case SelectionKind::GradientMagnitude: obj["kind"] = "gradient-magnitude"; break;
        case SelectionKind::MovementScore: obj["kind"] = "movement"; break;
        case SelectionKind::Random: obj["kind"] = "random"; break;
        case SelectionKind::LiftStructured: obj["kind"] = "lift-structured"; break;
    }
    obj["rank"] = m.strategy.rank_selection.r;
    obj["rank_variant"] = rank_variant_name(m.strategy.rank_selection.variant);
    obj["rank_seed"] = m.strategy.rank_selection.seed;
    obj["seed"] = m.strategy.seed;
    obj["block"] = m.strategy.block;
    obj["budget"] = budget_to_json(m.budget);
    return obj;
}

PerturbationSpec parse_perturb_spec(const json& obj, double default_std,
                                    const std::string& path) {
    reject_unknown_keys(obj, {"name", "kind", "rank", "rank_variant", "rank_seed", "seed",
                              "block", "budget", "noise_std"},
                        path);
    json method_obj = obj;
    method_obj.erase("noise_std");
    const MethodSpec m = parse_method(method_obj, path);
    if (m.full_finetune)
        throw ConfigError(path + "kind full is not a perturbation strategy");
    PerturbationSpec spec;
    spec.name = m.name;
    spec.strategy = m.strategy;
    spec.budget = m.budget;
    spec.noise_std = get_number(obj, "noise_std", default_std, path);
    if (spec.noise_std <= 0)
        throw ConfigError("out-of-range value: " + path + "noise_std must be > 0");
    return spec;
}

json perturb_spec_to_json(const PerturbationSpec& spec) {
    MethodSpec m;
    m.name = spec.name;
    m.strategy = spec.strategy;
    m.budget = spec.budget;
    json obj = method_to_json(m);
    obj["noise_std"] = spec.noise_std;
    return obj;
}

std::vector<MethodSpec> default_methods() {
    const auto rank = RankSelection::largest(16);
    const auto budget = BudgetSpec::lora_rank(16);
    std::vector<MethodSpec> methods;
    methods.push_back({"full", true, {}, {}});
    methods.push_back({"lift", false, SelectionStrategy::lift(rank), budget});
    methods.push_back({"weight-magnitude", false, SelectionStrategy::weight_magnitude(), budget});
    methods.push_back({"gradient-magnitude", false, SelectionStrategy::gradient_magnitude(), budget});
    methods.push_back({"random", false, SelectionStrategy::random(0), budget});
    return methods;
}

std::vector<PerturbationSpec> default_perturb_specs(double noise_std) {
    const auto rank = RankSelection::largest(64);
    const auto budget = BudgetSpec::lora_rank(64);
    std::vector<PerturbationSpec> specs;
    specs.push_back({"lift", SelectionStrategy::lift(rank), budget, noise_std, 0});
    specs.push_back({"weight-magnitude", SelectionStrategy::weight_magnitude(), budget,
                     noise_std, 0});
    specs.push_back({"random", SelectionStrategy::random(0), budget, noise_std, 0});
    return specs;
}

}  // namespace

SelectionStrategy parse_strategy_name(const std::string& name, int rank,
                                      const std::string& rank_variant,
                                      std::uint64_t seed, int block) {
    RankSelection rs{parse_rank_variant(rank_variant, "rank_variant"), rank, seed};
    if (name == "lift") return SelectionStrategy::lift(rs);
    if (name == "weight-magnitude") return SelectionStrategy::weight_magnitude();
    if (name == "gradient-magnitude") return SelectionStrategy::gradient_magnitude();
    if (name == "movement") return SelectionStrategy::movement_score();
    if (name == "random") return SelectionStrategy::random(seed);
    if (name == "lift-structured") return SelectionStrategy::lift_structured(rs, block);
    throw ConfigError("out-of-range value: kind must be one of "
                      "lift|weight-magnitude|gradient-magnitude|movement|random|"
                      "lift-structured");
}

std::string experiment_kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::ToyPipeline: return "toy-pipeline";
        case ExperimentKind::SpectralStudy: return "spectral-study";
        case ExperimentKind::PerturbEval: return "perturb-eval";
        case ExperimentKind::MaskInspect: return "mask-inspect";
    }
    return "toy-pipeline";
}

ExperimentConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = text.empty() ? json::object() : json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be an object");

    reject_unknown_keys(doc,
                        {"experiment", "seed", "output_dir", "dataset", "activation",
                         "pretrain", "finetune", "early_stop", "methods",
                         "spectral_study", "perturb_eval"},
                        "");

    ExperimentConfig cfg;

    const auto kind = get_string(doc, "experiment", "toy-pipeline", "");
    if (kind == "toy-pipeline") cfg.kind = ExperimentKind::ToyPipeline;
    else if (kind == "spectral-study") cfg.kind = ExperimentKind::SpectralStudy;
    else if (kind == "perturb-eval") cfg.kind = ExperimentKind::PerturbEval;
    else if (kind == "mask-inspect") cfg.kind = ExperimentKind::MaskInspect;
    else
        throw ConfigError("out-of-range value: experiment must be one of "
                          "toy-pipeline|spectral-study|perturb-eval|mask-inspect");

    cfg.seed = get_uint(doc, "seed", 0, "");
    cfg.output_dir = get_string(doc, "output_dir", "out", "");

    PipelineConfig& p = cfg.pipeline;
    p.seed = cfg.seed;
    p.pretrain_hp.lr = 1e-3;
    p.pretrain_hp.total_steps = 400;
    p.pretrain_hp.update_mask_interval = AdamHyperparams::kNever;
    p.finetune_hp.lr = 1e-3;
    p.finetune_hp.total_steps = 1500;
    p.finetune_hp.update_mask_interval = 200;

    if (doc.contains("dataset")) {
        const auto& ds = doc["dataset"];
        reject_unknown_keys(ds, {"d", "h", "n_pre", "n_ft"}, "dataset.");
        p.d = static_cast<Eigen::Index>(get_uint(ds, "d", 512, "dataset."));
        p.h = static_cast<Eigen::Index>(get_uint(ds, "h", 128, "dataset."));
        p.n_pre = static_cast<Eigen::Index>(get_uint(ds, "n_pre", 5000, "dataset."));
        p.n_ft = static_cast<Eigen::Index>(get_uint(ds, "n_ft", 100, "dataset."));
        if (p.d < 69)
            throw ConfigError("out-of-range value: dataset.d must be >= 69");
        if (p.h < 1 || p.n_pre < 10 || p.n_ft < 5)
            throw ConfigError("out-of-range value: dataset sizes too small");
    }

    const auto activation = get_string(doc, "activation", "relu", "");
    if (activation == "relu") p.activation = Activation::Relu;
    else if (activation == "tanh") p.activation = Activation::Tanh;
    else throw ConfigError("out-of-range value: activation must be relu|tanh");

    if (doc.contains("pretrain"))
        p.pretrain_hp = parse_adam(doc["pretrain"], p.pretrain_hp, "pretrain.", false);
    if (doc.contains("finetune"))
        p.finetune_hp = parse_adam(doc["finetune"], p.finetune_hp, "finetune.", true);

    if (doc.contains("early_stop")) {
        const auto& es = doc["early_stop"];
        reject_unknown_keys(es, {"patience", "min_delta"}, "early_stop.");
        p.early_stop.patience = get_uint(es, "patience", 20, "early_stop.");
        p.early_stop.min_delta = get_number(es, "min_delta", 0.0, "early_stop.");
        if (p.early_stop.patience < 1)
            throw ConfigError("out-of-range value: early_stop.patience must be >= 1");
        if (p.early_stop.min_delta < 0)
            throw ConfigError("out-of-range value: early_stop.min_delta must be >= 0");
    }

    if (doc.contains("methods")) {
        if (!doc["methods"].is_array())
            throw ConfigError("type mismatch: methods must be an array");
        for (std::size_t i = 0; i < doc["methods"].size(); ++i)
            p.methods.push_back(parse_method(doc["methods"][i],
                                             "methods[" + std::to_string(i) + "]."));
        if (p.methods.empty()) throw ConfigError("methods must not be empty");
    } else {
        p.methods = default_methods();
    }

    cfg.spectral.specs = default_perturb_specs(cfg.spectral.noise_std);
    if (doc.contains("spectral_study")) {
        const auto& ss = doc["spectral_study"];
        reject_unknown_keys(ss, {"dims", "noise_std", "trials", "strategies"},
                            "spectral_study.");
        cfg.spectral.noise_std =
            get_number(ss, "noise_std", cfg.spectral.noise_std, "spectral_study.");
        if (cfg.spectral.noise_std <= 0)
            throw ConfigError("out-of-range value: spectral_study.noise_std must be > 0");
        cfg.spectral.trials = static_cast<int>(
            get_uint(ss, "trials", static_cast<std::uint64_t>(cfg.spectral.trials),
                     "spectral_study."));
        if (cfg.spectral.trials < 1)
            throw ConfigError("out-of-range value: spectral_study.trials must be >= 1");
        if (ss.contains("dims")) {
            if (!ss["dims"].is_array())
                throw ConfigError("type mismatch: spectral_study.dims must be an array");
            cfg.spectral.dims.clear();
            for (const auto& dim : ss["dims"]) {
                if (!dim.is_array() || dim.size() != 2 ||
                    !dim[0].is_number_unsigned() || !dim[1].is_number_unsigned())
                    throw ConfigError("type mismatch: spectral_study.dims entries must "
                                      "be [rows, cols]");
                cfg.spectral.dims.emplace_back(dim[0].get<Eigen::Index>(),
                                               dim[1].get<Eigen::Index>());
            }
        }
        if (ss.contains("strategies")) {
            cfg.spectral.specs.clear();
            for (std::size_t i = 0; i < ss["strategies"].size(); ++i)
                cfg.spectral.specs.push_back(parse_perturb_spec(
                    ss["strategies"][i], cfg.spectral.noise_std,
                    "spectral_study.strategies[" + std::to_string(i) + "]."));
        } else {
            cfg.spectral.specs = default_perturb_specs(cfg.spectral.noise_std);
        }
    }

    cfg.perturb_eval.specs = default_perturb_specs(cfg.perturb_eval.noise_std);
    if (doc.contains("perturb_eval")) {
        const auto& pe = doc["perturb_eval"];
        reject_unknown_keys(pe, {"noise_std", "strategies"}, "perturb_eval.");
        cfg.perturb_eval.noise_std =
            get_number(pe, "noise_std", cfg.perturb_eval.noise_std, "perturb_eval.");
        if (cfg.perturb_eval.noise_std <= 0)
            throw ConfigError("out-of-range value: perturb_eval.noise_std must be > 0");
        if (pe.contains("strategies")) {
            cfg.perturb_eval.specs.clear();
            for (std::size_t i = 0; i < pe["strategies"].size(); ++i)
                cfg.perturb_eval.specs.push_back(parse_perturb_spec(
                    pe["strategies"][i], cfg.perturb_eval.noise_std,
                    "perturb_eval.strategies[" + std::to_string(i) + "]."));
        } else {
            cfg.perturb_eval.specs = default_perturb_specs(cfg.perturb_eval.noise_std);
        }
    }

    return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json doc;
    doc["experiment"] = experiment_kind_name(cfg.kind);
    doc["seed"] = cfg.seed;
    doc["output_dir"] = cfg.output_dir;
    doc["dataset"] = {{"d", cfg.pipeline.d},
                      {"h", cfg.pipeline.h},
                      {"n_pre", cfg.pipeline.n_pre},
                      {"n_ft", cfg.pipeline.n_ft}};
    doc["activation"] = cfg.pipeline.activation == Activation::Relu ? "relu" : "tanh";

    const auto adam_to_json = [](const AdamHyperparams& hp, bool has_interval) {
        json obj = {{"lr", hp.lr},         {"beta1", hp.beta1},
                    {"beta2", hp.beta2},   {"eps", hp.eps},
                    {"weight_decay", hp.weight_decay}, {"total_steps", hp.total_steps}};
        if (has_interval) obj["update_mask_interval"] = hp.update_mask_interval;
        return obj;
    };
    doc["pretrain"] = adam_to_json(cfg.pipeline.pretrain_hp, false);
    doc["finetune"] = adam_to_json(cfg.pipeline.finetune_hp, true);
    doc["early_stop"] = {{"patience", cfg.pipeline.early_stop.patience},
                         {"min_delta", cfg.pipeline.early_stop.min_delta}};

    doc["methods"] = json::array();
    for (const auto& m : cfg.pipeline.methods) doc["methods"].push_back(method_to_json(m));

    json dims = json::array();
    for (const auto& [r, c] : cfg.spectral.dims) dims.push_back({r, c});
    json spectral_strategies = json::array();
    for (const auto& s : cfg.spectral.specs)
        spectral_strategies.push_back(perturb_spec_to_json(s));
    doc["spectral_study"] = {{"dims", dims},
                             {"noise_std", cfg.spectral.noise_std},
                             {"trials", cfg.spectral.trials},
                             {"strategies", spectral_strategies}};

    json perturb_strategies = json::array();
    for (const auto& s : cfg.perturb_eval.specs)
        perturb_strategies.push_back(perturb_spec_to_json(s));
    doc["perturb_eval"] = {{"noise_std", cfg.perturb_eval.noise_std},
                           {"strategies", perturb_strategies}};

    return doc.dump(2) + "\n";
}

}  // namespace lift
