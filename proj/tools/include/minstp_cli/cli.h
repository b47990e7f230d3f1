// Copyright 2026 The minstp Authors.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MINSTP_CLI_CLI_H_
#define MINSTP_CLI_CLI_H_

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace minstp::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitChecksFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingFile = 3;
inline constexpr int kExitNumerical = 4;

// Flat key-value settings with section prefixes ("train.lr = 0.01"). Only
// keys that were set explicitly are stored; consumers fall back to their own
// defaults.
class Settings {
 public:
  // '#' starts a comment; blank lines are ignored. Throws ConfigError on
  // malformed lines or unknown keys.
  static Settings parse(const std::string& text);
  static Settings load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

  // Canonical JSON object of every explicitly set key.
  std::string to_json() const;

 private:
  std::map<std::string, std::string> values_;
};

// Every key the tool understands.
const std::vector<std::string>& known_keys();

// Stable 16-hex-digit hash of a command and its settings.
std::string config_hash(const std::string& command, const Settings& settings);

// Entry point shared by the executable and the tests. Results go to `out`,
// machine-readable errors (one JSON object) to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace minstp::cli

#endif  // MINSTP_CLI_CLI_H_
