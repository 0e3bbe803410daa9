#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "syntrans/hashing.hpp"

namespace syntrans::cli {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::ConfigInvalid, "cannot open config file " + path.string());
    }
    RunConfig cfg;
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#' || text[0] == ';') continue;
        if (text.front() == '[') {
            if (text.back() != ']') {
                throw Error(Errc::ConfigInvalid,
                            "malformed section header at line " + std::to_string(line_no));
            }
            section = trim(text.substr(1, text.size() - 2));
            cfg.sections_[section];
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw Error(Errc::ConfigInvalid,
                        "expected key=value at line " + std::to_string(line_no));
        }
        cfg.sections_[section][trim(text.substr(0, eq))] = trim(text.substr(eq + 1));
    }
    return cfg;
}

void RunConfig::apply_override(const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos) {
        sections_[""][trim(dotted_key)] = trim(value);
    } else {
        sections_[trim(dotted_key.substr(0, dot))][trim(dotted_key.substr(dot + 1))] = trim(value);
    }
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
}

std::string RunConfig::get(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return fallback;
    const auto kv = it->second.find(key);
    return kv == it->second.end() ? fallback : kv->second;
}

double RunConfig::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
    const std::string raw = get(section, key, "");
    if (raw.empty()) return fallback;
    try {
        return std::stod(raw);
    } catch (...) {
        throw Error(Errc::ConfigInvalid, section + "." + key + " is not a number: " + raw);
    }
}

std::uint64_t RunConfig::get_u64(const std::string& section, const std::string& key,
                                 std::uint64_t fallback) const {
    const std::string raw = get(section, key, "");
    if (raw.empty()) return fallback;
    try {
        return std::stoull(raw);
    } catch (...) {
        throw Error(Errc::ConfigInvalid, section + "." + key + " is not an integer: " + raw);
    }
}

bool RunConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const std::string raw = get(section, key, "");
    if (raw.empty()) return fallback;
    if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
    if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
    throw Error(Errc::ConfigInvalid, section + "." + key + " is not a boolean: " + raw);
}

void RunConfig::set_seed(std::uint64_t seed) {
    sections_[""]["seed"] = std::to_string(seed);
}

std::string RunConfig::canonical_section(const std::string& section) const {
    std::ostringstream out;
    const auto it = sections_.find(section);
    if (it != sections_.end()) {
        for (const auto& [key, value] : it->second) {
            out << key << "=" << value << "\n";
        }
    }
    return out.str();
}

std::filesystem::path RunConfig::out_dir() const {
    return get("paths", "out_dir", "runs/default");
}

data::SyntheticSpec synth_spec(const RunConfig& cfg) {
    data::SyntheticSpec spec;
    spec.num_categories = cfg.get_u64("synth", "categories", 10);
    spec.latent_dim = cfg.get_u64("synth", "latent_dim", 4);
    spec.visual_dim = cfg.get_u64("synth", "visual_dim", 16);
    spec.semantic_dim = cfg.get_u64("synth", "semantic_dim", 16);
    spec.samples_per_category = cfg.get_u64("synth", "samples_per_category", 30);
    spec.visual_noise = cfg.get_double("synth", "visual_noise", 0.3);
    spec.semantic_noise = cfg.get_double("synth", "semantic_noise", 0.02);
    spec.teacher_visual_noise = cfg.get_double("synth", "teacher_visual_noise", 0.05);
    spec.seed = cfg.get_u64("synth", "seed", cfg.seed());
    return spec;
}

std::size_t synth_base_categories(const RunConfig& cfg) {
    const std::size_t categories = cfg.get_u64("synth", "categories", 10);
    return cfg.get_u64("synth", "base_categories", categories / 2);
}

distill::DistillConfig distill_config(const RunConfig& cfg) {
    distill::DistillConfig out;
    out.temperature = cfg.get_double("distill", "temperature", 4.0);
    out.epochs = cfg.get_u64("distill", "epochs", 10);
    out.episodes_per_epoch = cfg.get_u64("distill", "episodes_per_epoch", 100);
    out.lr = cfg.get_double("distill", "lr", 1e-4);
    out.weight_decay = cfg.get_double("distill", "weight_decay", 5e-4);
    out.seed = cfg.seed();
    out.classifier_scale = cfg.get_double("distill", "scale", 10.0);
    out.episodic = cfg.get_bool("distill", "episodic", true);
    out.n_way = cfg.get_u64("distill", "n", 5);
    out.k_shot = cfg.get_u64("distill", "k", 5);
    out.q_queries = cfg.get_u64("distill", "q", 15);
    out.batch_size = cfg.get_u64("distill", "batch_size", 64);
    out.projector_relu = cfg.get_bool("distill", "projector_relu", false);
    out.projector_hidden = cfg.get_u64("distill", "projector_hidden", 0);
    return out;
}

synmine::ProviderConfig provider_config(const RunConfig& cfg) {
    synmine::ProviderConfig out;
    out.endpoint = cfg.get("mine", "endpoint", out.endpoint);
    out.model = cfg.get("mine", "model", out.model);
    out.timeout_seconds = static_cast<int>(cfg.get_u64("mine", "timeout_seconds", 30));
    out.retries = static_cast<int>(cfg.get_u64("mine", "retries", 2));
    out.use_stub = cfg.get_bool("mine", "use_stub", true);
    out.stub_seed = cfg.get_u64("mine", "stub_seed", cfg.seed());
    out.response_pointer = cfg.get("mine", "response_pointer", out.response_pointer);
    out.max_in_flight = static_cast<int>(cfg.get_u64("mine", "max_in_flight", 1));
    return out;
}

vsbird::BridgeConfig bridge_config(const RunConfig& cfg) {
    vsbird::BridgeConfig out;
    out.alpha = cfg.get_double("bridge", "alpha", 0.7);
    out.latent_dim = cfg.get_u64("bridge", "latent_dim", 0);
    out.epochs = cfg.get_u64("bridge", "epochs", 50);
    out.lr = cfg.get_double("bridge", "lr", 1e-4);
    out.weight_decay = cfg.get_double("bridge", "weight_decay", 5e-4);
    out.cosine_lr = cfg.get_bool("bridge", "cosine_lr", true);
    out.encoder_bias_init = cfg.get_double("bridge", "encoder_bias_init", 0.75);
    out.seed = cfg.seed();
    return out;
}

fusion::FusionConfig fusion_config(const RunConfig& cfg) {
    fusion::FusionConfig out;
    out.lambda = cfg.get_double("fuse", "lambda", 0.0);
    out.meta_epochs = cfg.get_u64("fuse", "meta_epochs", 10);
    out.episodes_per_epoch = cfg.get_u64("fuse", "episodes_per_epoch", 200);
    out.n_way = cfg.get_u64("fuse", "n", 5);
    out.k_shot = cfg.get_u64("fuse", "k", 1);
    out.q_queries = cfg.get_u64("fuse", "q", 15);
    out.lr = cfg.get_double("fuse", "lr", 1e-4);
    out.weight_decay = cfg.get_double("fuse", "weight_decay", 5e-4);
    out.cosine_lr = cfg.get_bool("fuse", "cosine_lr", false);
    out.seed = cfg.seed();
    out.hidden_dim = cfg.get_u64("fuse", "hidden_dim", 2048);
    out.raw_dot_fusion = cfg.get_bool("fuse", "raw_dot", false);
    return out;
}

EvalSettings eval_settings(const RunConfig& cfg) {
    EvalSettings out;
    out.n_way = cfg.get_u64("eval", "n", 5);
    out.k_shot = cfg.get_u64("eval", "k", 1);
    out.q_queries = cfg.get_u64("eval", "q", 15);
    out.episodes = cfg.get_u64("eval", "episodes", 600);
    out.lambda = cfg.get_double("eval", "lambda", 0.0);
    out.raw_dot = cfg.get_bool("eval", "raw_dot", false);
    return out;
}

std::vector<double> sweep_alphas(const RunConfig& cfg) {
    const std::string raw = cfg.get("sweep", "alphas", "0.0,0.3,0.5,0.7,0.9,1.0");
    std::vector<double> out;
    std::stringstream ss(raw);
    std::string token;
    while (std::getline(ss, token, ',')) {
        const std::string t = trim(token);
        if (t.empty()) continue;
        try {
            out.push_back(std::stod(t));
        } catch (...) {
            throw Error(Errc::ConfigInvalid, "sweep.alphas entry is not a number: " + t);
        }
    }
    if (out.empty()) {
        throw Error(Errc::ConfigInvalid, "sweep.alphas is empty");
    }
    return out;
}

namespace {

std::string short_hash(std::uint64_t h) {
    return hashing::to_hex(h).substr(8); // low 8 hex digits
}

std::uint64_t fold(const std::string& text, std::uint64_t h = hashing::kFnvOffset) {
    return hashing::fnv1a(text, h);
}

} // namespace

StageHashes stage_hashes(const RunConfig& cfg) {
    const std::string seed_text = "seed=" + std::to_string(cfg.seed()) + "\n";
    const std::uint64_t h_synth = fold(cfg.canonical_section("synth"), fold(seed_text));
    const std::uint64_t h_mine =
        fold(cfg.canonical_section("mine"), fold(seed_text, h_synth));
    const std::uint64_t h_distill =
        fold(cfg.canonical_section("distill"), fold(seed_text, h_synth));
    const std::uint64_t h_bridge =
        fold(cfg.canonical_section("bridge"), fold(seed_text, h_distill ^ h_mine));
    const std::uint64_t h_fuse = fold(cfg.canonical_section("fuse"), fold(seed_text, h_bridge));
    const std::uint64_t h_eval = fold(cfg.canonical_section("eval"), h_fuse);

    StageHashes out;
    out.synth = short_hash(h_synth);
    out.mine = short_hash(h_mine);
    out.distill = short_hash(h_distill);
    out.bridge = short_hash(h_bridge);
    out.fuse = short_hash(h_fuse);
    out.eval = short_hash(h_eval);
    return out;
}

ArtifactPaths artifact_paths(const RunConfig& cfg, const StageHashes& hashes) {
    const std::filesystem::path dir = cfg.out_dir();
    ArtifactPaths out;
    out.student_bank = cfg.has("paths", "student_bank")
                           ? std::filesystem::path(cfg.get("paths", "student_bank", ""))
                           : dir / ("student_visual-" + hashes.synth + ".synb");
    out.teacher_visual_bank =
        cfg.has("paths", "teacher_visual_bank")
            ? std::filesystem::path(cfg.get("paths", "teacher_visual_bank", ""))
            : dir / ("teacher_visual-" + hashes.synth + ".synb");
    out.teacher_text_bank = cfg.has("paths", "teacher_text_bank")
                                ? std::filesystem::path(cfg.get("paths", "teacher_text_bank", ""))
                                : dir / ("teacher_text-" + hashes.synth + ".synb");
    out.split = cfg.has("paths", "split") ? std::filesystem::path(cfg.get("paths", "split", ""))
                                          : dir / ("split-" + hashes.synth + ".json");

    std::filesystem::path cache_dir = dir;
    if (const char* env = std::getenv("SYNBRIDGE_CACHE_DIR"); env != nullptr && *env != '\0') {
        cache_dir = env;
    }
    out.description_cache = cache_dir / ("descriptions-" + hashes.mine + ".jsonl");

    out.stage1_checkpoint = dir / ("stage1-" + hashes.distill + ".synw");
    out.bridge_checkpoint = dir / ("bridge-" + hashes.bridge + ".synw");
    out.fusion_checkpoint = dir / ("fusion-" + hashes.fuse + ".synw");
    out.eval_report = dir / ("eval-" + hashes.eval + ".json");
    out.eval_csv = dir / ("eval-" + hashes.eval + ".csv");
    out.sweep_report = dir / ("sweep-" + hashes.eval + ".json");
    return out;
}

} // namespace syntrans::cli
