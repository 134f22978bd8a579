#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace reglgc {

// Key = value configuration shared by the CLI and the C API. Lines hold one
// `key = value` pair; blank lines and lines starting with '#' are skipped;
// later assignments win, which is how command-line overrides are applied.
class KvConfig {
  public:
    static KvConfig parse(const std::string& text);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;

    // Rejects keys outside the allowed set; entries ending in '.' act as
    // prefixes.
    void require_known(const std::vector<std::string>& allowed) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

  private:
    std::map<std::string, std::string> kv_;
};

// Subcommand drivers. Each validates its configuration, runs, writes its
// artifacts plus a manifest, and returns a human-readable summary. Errors
// surface as the exception types in errors.hpp.
std::string run_analyze(const std::string& config_text);
std::string run_select(const std::string& config_text);
std::string run_study(const std::string& config_text);
std::string run_simulate(const std::string& config_text);

// Dispatcher: maps exceptions to exit codes (0 ok, 1 validation,
// 2 numerical, 3 io). On success *summary holds the report; on failure
// *error holds the message.
int run_subcommand(const std::string& name, const std::string& config_text, std::string* summary,
                   std::string* error);

}  // namespace reglgc
