/* Copyright 2026 The SegPL Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SEGPL_CSV_HPP_
#define SEGPL_CSV_HPP_

// RFC 4180 CSV output with '.' as decimal separator.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "segpl/error.hpp"

namespace segpl::csv {

inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Locale-independent, round-trippable number formatting.
inline std::string number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline std::string number(std::optional<double> v) { return v ? number(*v) : ""; }

class Writer {
 public:
  Writer(const std::filesystem::path& path, const std::vector<std::string>& header)
      : os_(path), path_(path) {
    if (!os_) throw DataError("cannot open " + path.string() + " for writing");
    row(header);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os_ << ',';
      os_ << quote(fields[i]);
    }
    os_ << "\r\n";
    if (!os_) throw DataError("failed writing " + path_.string());
  }

 private:
  std::ofstream os_;
  std::filesystem::path path_;
};

}  // namespace segpl::csv

#endif  // SEGPL_CSV_HPP_
