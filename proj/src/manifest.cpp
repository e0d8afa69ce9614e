#include "featshield/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "featshield/tensor.hpp"

namespace featshield {

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw Error("manifest: unknown split '" + s + "'");
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& e) const {
    const std::filesystem::path p(e.path);
    return p.is_absolute() ? p : root / p;
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].split == split) out.push_back(i);
    return out;
}

std::vector<std::string> DatasetManifest::identities() const {
    std::set<std::string> ids;
    for (const auto& e : entries) ids.insert(e.identity);
    return {ids.begin(), ids.end()};
}

std::size_t DatasetManifest::protected_count() const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const ManifestEntry& e) { return e.protected_flag; }));
}

void DatasetManifest::validate() const {
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& e : entries) {
        if (e.protected_flag && e.split != Split::train) {
            throw Error("manifest: test entry " + e.path + " is marked protected");
        }
        auto& c = counts[e.identity];
        (e.split == Split::train ? c.first : c.second)++;
    }
    for (const auto& [id, c] : counts) {
        if (c.first == 0 || c.second == 0) {
            throw Error("manifest: identity '" + id + "' needs at least one train and one test entry");
        }
    }
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> csv_split_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    fields.back() += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else if (c != '\r') {
            fields.back() += c;
        }
    }
    if (quoted) throw Error("csv: unterminated quoted field");
    return fields;
}

namespace {

constexpr const char* kHeader = "path,caption,identity,split,protected";

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& csv) {
    std::ifstream in(csv);
    if (!in) throw Error("read_manifest: cannot open " + csv.string());
    DatasetManifest m;
    m.root = csv.has_parent_path() ? csv.parent_path() : std::filesystem::path(".");
    std::string line;
    if (!std::getline(in, line) || csv_split_line(line) != csv_split_line(kHeader)) {
        throw Error("read_manifest: " + csv.string() + " lacks header '" + kHeader + "'");
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = csv_split_line(line);
        if (f.size() != 5) {
            throw Error("read_manifest: " + csv.string() + ":" + std::to_string(lineno) + " expected 5 fields");
        }
        if (f[4] != "0" && f[4] != "1") {
            throw Error("read_manifest: " + csv.string() + ":" + std::to_string(lineno) + " protected must be 0 or 1");
        }
        m.entries.push_back({f[0], f[1], f[2], split_from_string(f[3]), f[4] == "1"});
    }
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv) {
    if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
    std::ofstream out(csv);
    if (!out) throw Error("write_manifest: cannot open " + csv.string());
    out << kHeader << '\n';
    for (const auto& e : manifest.entries) {
        out << csv_escape(e.path) << ',' << csv_escape(e.caption) << ',' << csv_escape(e.identity) << ','
            << to_string(e.split) << ',' << (e.protected_flag ? 1 : 0) << '\n';
    }
    if (!out) throw Error("write_manifest: write failed for " + csv.string());
}

}  // namespace featshield
