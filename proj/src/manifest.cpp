#include "clonescope/manifest.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

using nlohmann::json;

namespace clonescope {

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw std::runtime_error("manifest parse error at line " + std::to_string(lineno));
        ManifestEntry e;
        e.path = j.at("path").get<std::string>();
        e.clone = j.at("clone").get<std::string>();
        e.isolate = j.at("isolate").get<std::string>();
        e.preparation = j.at("preparation").get<std::string>();
        if (j.contains("image_id"))
            e.image_id = j["image_id"].get<std::string>();
        else
            e.image_id = std::filesystem::path(e.path).stem().string();
        out.push_back(std::move(e));
    }
    return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    for (const auto& e : entries) {
        json j{{"path", e.path},
               {"clone", e.clone},
               {"isolate", e.isolate},
               {"preparation", e.preparation},
               {"image_id", e.image_id}};
        out << j.dump() << "\n";
    }
}

} // namespace clonescope
