#include "syntrans/synmine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "syntrans/hashing.hpp"

namespace syntrans::synmine {

using nlohmann::json;

PromptPair build_prompts(const std::string& name, const std::string& definition) {
    if (name.empty()) {
        throw Error(Errc::EmptyName, "category name must not be empty");
    }
    if (definition.empty()) {
        std::cerr << "warning: empty definition for category '" << name << "'\n";
    }
    PromptPair out;
    out.class_name = name;
    out.definition = definition;
    out.prompt1 = definition + " is the definition of the " + name +
                  ". Can you describe the visual features associated with this category?";
    out.prompt2 = "Please describe the " + name +
                  " in a maximum of five sentences, focusing on discriminative visual features. "
                  "Make the description more detailed and aligned with scientific facts, avoiding "
                  "general summaries and subjective interpretations.";
    return out;
}

HttpTextProvider::HttpTextProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    // split "http://host:port/some/path" into client base and request path
    const std::string& url = cfg_.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(Errc::ConfigInvalid, "provider endpoint must be an http URL: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        base_url_ = url;
        path_ = "/";
    } else {
        base_url_ = url.substr(0, path_start);
        path_ = url.substr(path_start);
    }
}

std::string HttpTextProvider::id() const {
    return "http:" + cfg_.model + "@" + base_url_;
}

std::string HttpTextProvider::complete(const std::vector<Message>& messages) {
    json body;
    body["model"] = cfg_.model;
    body["messages"] = json::array();
    for (const Message& m : messages) {
        body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    const std::string payload = body.dump();

    std::string last_failure;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        httplib::Client client(base_url_);
        client.set_connection_timeout(cfg_.timeout_seconds, 0);
        client.set_read_timeout(cfg_.timeout_seconds, 0);
        auto res = client.Post(path_, payload, "application/json");
        if (!res) {
            last_failure = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_failure = "status " + std::to_string(res->status) + ": " +
                           res->body.substr(0, 200);
            continue;
        }
        json parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) {
            throw Error(Errc::ProviderError, "provider returned invalid JSON");
        }
        const json::json_pointer ptr(cfg_.response_pointer);
        if (!parsed.contains(ptr) || !parsed.at(ptr).is_string()) {
            throw Error(Errc::ProviderError,
                        "no text at response pointer " + cfg_.response_pointer);
        }
        return parsed.at(ptr).get<std::string>();
    }
    if (last_failure.rfind("status ", 0) == 0) {
        throw Error(Errc::ProviderError, last_failure);
    }
    throw Error(Errc::ProviderTimeout, "provider unreachable: " + last_failure);
}

std::string HttpTextProvider::describe(const PromptPair& prompts) {
    const std::string first = complete({{"user", prompts.prompt1}});
    return complete({{"user", prompts.prompt1}, {"assistant", first}, {"user", prompts.prompt2}});
}

namespace {

const char* kStubColors[] = {"russet", "slate-grey", "ochre", "ivory", "dusky",
                             "emerald", "umber", "pale-blue"};
const char* kStubParts[] = {"crown", "flank", "dorsal surface", "outline", "underside",
                            "margin", "crest", "base"};
const char* kStubTextures[] = {"mottled", "striated", "glossy", "matte", "speckled",
                               "banded", "uniform", "gradient"};

} // namespace

std::string StubTextProvider::describe(const PromptPair& prompts) {
    std::uint64_t h = hashing::fnv1a(prompts.prompt1);
    h = hashing::fnv1a(prompts.prompt2, h);
    h = hashing::fnv1a(std::to_string(seed_), h);
    const auto pick = [&h](const char* const* table, std::size_t n) {
        h = h * 6364136223846793005ull + 1442695040888963407ull;
        return table[(h >> 33) % n];
    };
    std::string text = "The " + prompts.class_name + " shows a " + pick(kStubColors, 8) + " " +
                       pick(kStubParts, 8) + " with a " + pick(kStubTextures, 8) + " pattern. ";
    text += "Its " + std::string(pick(kStubParts, 8)) + " appears " + pick(kStubColors, 8) +
            " and " + pick(kStubTextures, 8) + ". ";
    text += "Distinctive marks include a " + std::string(pick(kStubTextures, 8)) + " " +
            pick(kStubParts, 8) + ".";
    return text;
}

std::string StubTextProvider::id() const {
    return "stub:" + std::to_string(seed_);
}

std::unique_ptr<TextProvider> make_provider(const ProviderConfig& cfg) {
    if (cfg.use_stub) {
        return std::make_unique<StubTextProvider>(cfg.stub_seed);
    }
    return std::make_unique<HttpTextProvider>(cfg);
}

std::string content_hash(const std::string& name, const std::string& definition,
                         const std::string& provider_id) {
    const std::string key = name + '\x1f' + definition + '\x1f' + provider_id;
    return hashing::to_hex(hashing::fnv1a(key));
}

DescriptionMap load_description_cache(const std::filesystem::path& path) {
    DescriptionMap out;
    std::ifstream in(path);
    if (!in) return out; // absent cache is just empty
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw Error(Errc::CorruptPayload, "invalid cache line in " + path.string());
        }
        DescriptionRecord rec;
        rec.id = j.at("id").get<std::uint32_t>();
        rec.name = j.value("name", "");
        rec.definition = j.value("definition", "");
        rec.description = j.value("description", "");
        rec.provider = j.value("provider", "");
        rec.hash = j.value("hash", "");
        out[rec.id] = std::move(rec);
    }
    return out;
}

void save_description_cache(const DescriptionMap& records, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) {
            throw Error(Errc::MissingArtifact, "cannot write cache " + tmp.string());
        }
        for (const auto& [id, rec] : records) {
            json j;
            j["id"] = rec.id;
            j["name"] = rec.name;
            j["definition"] = rec.definition;
            j["description"] = rec.description;
            j["provider"] = rec.provider;
            j["hash"] = rec.hash;
            out << j.dump() << "\n";
        }
    }
    std::filesystem::rename(tmp, path); // atomic swap on the same filesystem
}

DescriptionMap mine_descriptions(const std::vector<data::CategoryInfo>& categories,
                                 TextProvider& provider, const std::filesystem::path& cache_path,
                                 int max_in_flight) {
    DescriptionMap cache = load_description_cache(cache_path);
    const std::string provider_id = provider.id();

    std::vector<const data::CategoryInfo*> pending;
    for (const auto& cat : categories) {
        const std::string hash = content_hash(cat.name, cat.definition, provider_id);
        const auto it = cache.find(cat.id);
        if (it == cache.end() || it->second.hash != hash) {
            pending.push_back(&cat);
        }
    }

    if (!pending.empty()) {
        std::mutex mu;
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        const int workers =
            std::max(1, std::min<int>(max_in_flight, static_cast<int>(pending.size())));

        auto work = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= pending.size()) return;
                const data::CategoryInfo& cat = *pending[i];
                try {
                    const PromptPair prompts = build_prompts(cat.name, cat.definition);
                    DescriptionRecord rec;
                    rec.id = cat.id;
                    rec.name = cat.name;
                    rec.definition = cat.definition;
                    rec.description = provider.describe(prompts);
                    rec.provider = provider_id;
                    rec.hash = content_hash(cat.name, cat.definition, provider_id);
                    std::lock_guard<std::mutex> lock(mu);
                    cache[rec.id] = std::move(rec);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };

        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> threads;
            for (int w = 0; w < workers; ++w) threads.emplace_back(work);
            for (auto& t : threads) t.join();
        }
        if (first_error) std::rethrow_exception(first_error);
        save_description_cache(cache, cache_path);
    }

    DescriptionMap out;
    for (const auto& cat : categories) {
        out[cat.id] = cache.at(cat.id);
    }
    return out;
}

SemanticDescriptorSet::SemanticDescriptorSet(std::vector<SemanticDescriptor> items)
    : items_(std::move(items)) {
    for (const auto& item : items_) {
        if (items_.front().vector.size() != item.vector.size()) {
            throw Error(Errc::DimMismatch, "descriptor dimensions differ across categories");
        }
        if (std::abs(num::norm(item.vector) - 1.0) > 1e-6) {
            throw Error(Errc::ZeroNorm, "descriptor for category " + std::to_string(item.id) +
                                            " is not unit-normalized");
        }
        std::size_t count = 0;
        for (const auto& other : items_) count += other.id == item.id;
        if (count != 1) {
            throw Error(Errc::CorruptPayload,
                        "duplicate descriptor for category " + std::to_string(item.id));
        }
    }
}

const SemanticDescriptor& SemanticDescriptorSet::by_id(std::uint32_t id) const {
    for (const auto& item : items_) {
        if (item.id == id) return item;
    }
    throw Error(Errc::MissingDescriptor, "no descriptor for category " + std::to_string(id));
}

bool SemanticDescriptorSet::has(std::uint32_t id) const {
    for (const auto& item : items_) {
        if (item.id == id) return true;
    }
    return false;
}

SemanticDescriptorSet attach_descriptors(const DescriptionMap& texts,
                                         const data::EmbeddingBank& encoded) {
    std::vector<SemanticDescriptor> items;
    for (const auto& [id, rec] : texts) {
        if (!encoded.has_category(id) || encoded.rows_of_category(id).size() != 1) {
            throw Error(Errc::MissingDescriptor,
                        "no encoded row for category '" + rec.name + "' (id " +
                            std::to_string(id) + ")");
        }
        SemanticDescriptor item;
        item.id = id;
        try {
            item.vector = num::l2_normalize(encoded.category_row(id));
        } catch (const Error& e) {
            if (e.code() == Errc::ZeroNorm) {
                throw Error(Errc::ZeroNorm, "encoded row for category '" + rec.name + "' (id " +
                                                std::to_string(id) + ") has zero norm");
            }
            throw;
        }
        item.description = rec.description;
        item.definition = rec.definition;
        item.provider = rec.provider;
        item.hash = rec.hash;
        items.push_back(std::move(item));
    }
    return SemanticDescriptorSet(std::move(items));
}

} // namespace syntrans::synmine
