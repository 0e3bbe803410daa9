#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "syntrans/dataio.hpp"
#include "syntrans/numcore.hpp"

namespace syntrans::synmine {

// The two chained prompts sent per category. prompt1 grounds the model with
// the short definition; prompt2 asks for the refined visual description with
// prompt1's answer as prior context.
struct PromptPair {
    std::string prompt1;
    std::string prompt2;
    std::string class_name;
    std::string definition;
};

PromptPair build_prompts(const std::string& name, const std::string& definition);

struct Message {
    std::string role; // "user" or "assistant"
    std::string content;
};

// One call per category; HTTP implementations run the two-turn chain inside.
class TextProvider {
public:
    virtual ~TextProvider() = default;
    virtual std::string describe(const PromptPair& prompts) = 0;
    virtual std::string id() const = 0;
};

struct ProviderConfig {
    std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
    std::string model = "gpt-3.5-turbo";
    int timeout_seconds = 30;
    int retries = 2; // extra attempts after the first
    bool use_stub = true;
    std::uint64_t stub_seed = 0;
    std::string response_pointer = "/choices/0/message/content";
    int max_in_flight = 1;
};

// POSTs {"model", "messages": [...]} and reads the generated text at the
// configured JSON-pointer path.
class HttpTextProvider : public TextProvider {
public:
    explicit HttpTextProvider(ProviderConfig cfg);
    std::string describe(const PromptPair& prompts) override;
    std::string id() const override;

private:
    std::string complete(const std::vector<Message>& messages);

    ProviderConfig cfg_;
    std::string base_url_;
    std::string path_;
};

// Offline provider emitting hash-seeded pseudo-descriptions so the whole
// pipeline runs without a network.
class StubTextProvider : public TextProvider {
public:
    explicit StubTextProvider(std::uint64_t seed) : seed_(seed) {}
    std::string describe(const PromptPair& prompts) override;
    std::string id() const override;

private:
    std::uint64_t seed_;
};

std::unique_ptr<TextProvider> make_provider(const ProviderConfig& cfg);

struct DescriptionRecord {
    std::uint32_t id = 0;
    std::string name;
    std::string definition;
    std::string description;
    std::string provider;
    std::string hash;

    bool operator==(const DescriptionRecord&) const = default;
};

using DescriptionMap = std::map<std::uint32_t, DescriptionRecord>;

std::string content_hash(const std::string& name, const std::string& definition,
                         const std::string& provider_id);

DescriptionMap load_description_cache(const std::filesystem::path& path);
void save_description_cache(const DescriptionMap& records, const std::filesystem::path& path);

// Mines a description for every category not already covered by the cache
// (matched by content hash), updates the cache atomically and returns the
// full map. Idempotent: a second call issues zero provider calls.
DescriptionMap mine_descriptions(const std::vector<data::CategoryInfo>& categories,
                                 TextProvider& provider, const std::filesystem::path& cache_path,
                                 int max_in_flight = 1);

struct SemanticDescriptor {
    std::uint32_t id = 0;
    num::Vector vector; // unit norm
    std::string description;
    std::string definition;
    std::string provider;
    std::string hash;
};

class SemanticDescriptorSet {
public:
    SemanticDescriptorSet() = default;
    explicit SemanticDescriptorSet(std::vector<SemanticDescriptor> items);

    const SemanticDescriptor& by_id(std::uint32_t id) const;
    bool has(std::uint32_t id) const;
    const std::vector<SemanticDescriptor>& items() const { return items_; }
    std::size_t dim() const { return items_.empty() ? 0 : items_.front().vector.size(); }

private:
    std::vector<SemanticDescriptor> items_;
};

// Joins mined texts with their externally encoded vectors (a
// teacher_text-style bank), re-normalizing each row.
SemanticDescriptorSet attach_descriptors(const DescriptionMap& texts,
                                         const data::EmbeddingBank& encoded);

} // namespace syntrans::synmine
