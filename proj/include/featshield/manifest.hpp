#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace featshield {

enum class Split { train, test };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

struct ManifestEntry {
    std::string path;  // relative to the manifest root, or absolute
    std::string caption;
    std::string identity;
    Split split = Split::train;
    bool protected_flag = false;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Ordered image-text dataset. CSV header: path,caption,identity,split,protected
struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const ManifestEntry& e) const;
    std::vector<std::size_t> indices(Split split) const;
    std::vector<std::string> identities() const;  // sorted, unique
    std::size_t protected_count() const;

    /// Every identity has train and test entries; only train entries are protected.
    void validate() const;
};

/// Reads a manifest CSV; root becomes the CSV's directory.
DatasetManifest read_manifest(const std::filesystem::path& csv);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv);

/// RFC 4180 field quoting.
std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split_line(const std::string& line);

}  // namespace featshield
