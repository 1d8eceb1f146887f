#pragma once
// JSON-lines dataset manifest: one record per image with clone/isolate/
// preparation labels.

#include "clonescope/image.hpp"

#include <string>
#include <vector>

namespace clonescope {

struct ManifestEntry {
    std::string path;
    std::string clone;
    std::string isolate;
    std::string preparation;
    std::string image_id; // derived from path stem when absent
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

} // namespace clonescope
