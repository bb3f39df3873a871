#pragma once
// Append-only JSONL files with a mandatory header line. Every tool output
// starts with {"header": {...}} recording config digest, seed, and version
// so any file can be traced back to the run that produced it.

#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mics {

inline constexpr const char* kToolVersion = "0.1.0";

struct FileHeader {
    std::string config_digest;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
};

nlohmann::json header_to_json(const FileHeader& h);
std::optional<FileHeader> header_from_json(const nlohmann::json& j);

// Reads all records of a JSONL file, skipping the header (returned
// separately when present). Partial trailing lines are ignored.
struct JsonlFile {
    std::optional<FileHeader> header;
    std::vector<nlohmann::json> records;
};

JsonlFile read_jsonl(const std::string& path);

// Serialized appender. Each record is written as one complete line in a
// single write so an interrupted run never leaves a partial JSON line.
class JsonlWriter {
public:
    // Opens for append. If the file is empty/new, writes the header first.
    JsonlWriter(const std::string& path, const FileHeader& header);
    ~JsonlWriter();
    JsonlWriter(const JsonlWriter&) = delete;
    JsonlWriter& operator=(const JsonlWriter&) = delete;

    void append(const nlohmann::json& record);

private:
    std::mutex mu_;
    int fd_ = -1;
};

}  // namespace mics
