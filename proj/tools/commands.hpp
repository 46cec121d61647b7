#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace bnnk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitCheckFailed = 3;

struct CommonOptions {
  std::filesystem::path config;
  std::filesystem::path data;
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> episodes;
};

/// Files are buffered in memory and only written by commit(), so a failing
/// command leaves nothing behind.
class Outputs {
 public:
  void add(std::string name, std::string text) { files_.emplace_back(std::move(name), std::move(text)); }
  void add_json(std::string name, const nlohmann::json& j) { add(std::move(name), j.dump(2) + "\n"); }
  void commit(const std::filesystem::path& out_dir) const;

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

int cmd_prior_sample(const CommonOptions& o);
int cmd_kernel_check(const CommonOptions& o);
int cmd_gp_fit(const CommonOptions& o);
int cmd_bnn_fit(const CommonOptions& o);
int cmd_timeseries(const CommonOptions& o, const std::string& synthetic);
int cmd_rl_train(const CommonOptions& o, bool log_steps);
int cmd_rl_eval(const CommonOptions& o);

}  // namespace bnnk::cli
