#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "syntrans/dataio.hpp"
#include "syntrans/distill.hpp"
#include "syntrans/fusion.hpp"
#include "syntrans/synmine.hpp"
#include "syntrans/vsbird.hpp"

namespace syntrans::cli {

// Parsed INI-style config: sections of key=value pairs. The empty section
// holds top-level keys (currently just "seed").
class RunConfig {
public:
    static RunConfig from_file(const std::filesystem::path& path);

    void apply_override(const std::string& dotted_key, const std::string& value);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    std::uint64_t seed() const { return get_u64("", "seed", 0); }
    void set_seed(std::uint64_t seed);

    // Canonical "key=value\n" dump of one section, keys sorted; the basis of
    // the per-stage content hashes.
    std::string canonical_section(const std::string& section) const;

    std::filesystem::path out_dir() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

// Per-stage config extraction (paper defaults baked in as fallbacks).
data::SyntheticSpec synth_spec(const RunConfig& cfg);
std::size_t synth_base_categories(const RunConfig& cfg);
distill::DistillConfig distill_config(const RunConfig& cfg);
synmine::ProviderConfig provider_config(const RunConfig& cfg);
vsbird::BridgeConfig bridge_config(const RunConfig& cfg);
fusion::FusionConfig fusion_config(const RunConfig& cfg);

struct EvalSettings {
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t q_queries = 15;
    std::size_t episodes = 600;
    double lambda = 0.0;
    bool raw_dot = false;
};
EvalSettings eval_settings(const RunConfig& cfg);

std::vector<double> sweep_alphas(const RunConfig& cfg);

// Chained stage hashes: every stage folds its own section and every upstream
// hash into an 8-hex token, so stale artifacts are never silently reused.
struct StageHashes {
    std::string synth;
    std::string mine;
    std::string distill;
    std::string bridge;
    std::string fuse;
    std::string eval;
};
StageHashes stage_hashes(const RunConfig& cfg);

// Artifact locations derived from the config (all under out_dir unless an
// explicit [paths] override or SYNBRIDGE_CACHE_DIR is present).
struct ArtifactPaths {
    std::filesystem::path student_bank;
    std::filesystem::path teacher_visual_bank;
    std::filesystem::path teacher_text_bank;
    std::filesystem::path split;
    std::filesystem::path description_cache;
    std::filesystem::path stage1_checkpoint;
    std::filesystem::path bridge_checkpoint;
    std::filesystem::path fusion_checkpoint;
    std::filesystem::path eval_report;
    std::filesystem::path eval_csv;
    std::filesystem::path sweep_report;
};
ArtifactPaths artifact_paths(const RunConfig& cfg, const StageHashes& hashes);

} // namespace syntrans::cli
