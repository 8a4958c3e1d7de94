#include "swapsched/profiles.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace swapsched {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    size_t a = field.find_first_not_of(" \t\r");
    size_t b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string()
                                         : field.substr(a, b - a + 1));
  }
  return out;
}

bool parse_ll(const std::string& s, long long& v) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_ull(const std::string& s, unsigned long long& v) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(const std::string& s, double& v) {
  try {
    size_t pos = 0;
    v = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

ProfileSet parse_profile_csv(const std::string& text, const std::string& origin,
                             const ProfileLoadOptions& opts) {
  ProfileSet set;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw SpecError(origin + ": empty profile file");
  auto header = split_csv_line(line);

  const std::vector<std::string> compute_hdr = {"minibatch", "phase",
                                                "layer_type", "flops", "time_s"};
  const std::vector<std::string> transfer_hdr = {"minibatch", "seq_no", "bytes",
                                                 "time_s"};
  bool is_compute = header == compute_hdr;
  bool is_transfer = header == transfer_hdr;
  if (!is_compute && !is_transfer)
    throw SpecError(origin + ": unrecognized header; expected '" +
                    "minibatch,phase,layer_type,flops,time_s' or '" +
                    "minibatch,seq_no,bytes,time_s'");

  int row = 1;
  int valid = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    auto f = split_csv_line(line);
    auto reject = [&](const std::string& why) {
      set.diagnostics.push_back(origin + ":" + std::to_string(row) + ": " + why);
    };
    if (is_compute) {
      if (f.size() != 5) {
        reject("expected 5 columns");
        continue;
      }
      ComputeSample s;
      long long mb = 0, phase = 0;
      unsigned long long flops = 0;
      if (!parse_ll(f[0], mb) || !parse_ll(f[1], phase) ||
          !parse_ull(f[3], flops) || !parse_double(f[4], s.time_s)) {
        reject("unparsable numeric field");
        continue;
      }
      s.minibatch = static_cast<int>(mb);
      s.phase = static_cast<int>(phase);
      s.layer_type = f[2];
      s.flops = flops;
      if (s.flops == 0) {
        reject("flops must be positive");
        continue;
      }
      if (!(s.time_s > 0.0)) {
        reject("time must be positive");
        continue;
      }
      if (s.time_s < opts.min_sample_s) {
        reject("sample below noise threshold");
        continue;
      }
      set.sampled_minibatches.insert(s.minibatch);
      set.compute_samples.push_back(std::move(s));
      ++valid;
    } else {
      if (f.size() != 4) {
        reject("expected 4 columns");
        continue;
      }
      TransferSample s;
      long long mb = 0;
      unsigned long long seq = 0, bytes = 0;
      if (!parse_ll(f[0], mb) || !parse_ull(f[1], seq) ||
          !parse_ull(f[2], bytes) || !parse_double(f[3], s.time_s)) {
        reject("unparsable numeric field");
        continue;
      }
      s.minibatch = static_cast<int>(mb);
      s.seq_no = static_cast<std::uint32_t>(seq);
      s.bytes = bytes;
      if (s.bytes == 0) {
        reject("bytes must be positive");
        continue;
      }
      if (!(s.time_s > 0.0)) {
        reject("time must be positive");
        continue;
      }
      if (s.time_s < opts.min_sample_s) {
        reject("sample below noise threshold");
        continue;
      }
      set.sampled_minibatches.insert(s.minibatch);
      set.transfer_samples.push_back(std::move(s));
      ++valid;
    }
  }
  if (valid == 0) throw SpecError(origin + ": no valid rows");
  return set;
}

ProfileSet load_profiles(const std::vector<std::filesystem::path>& paths,
                         const ProfileLoadOptions& opts) {
  if (paths.empty()) throw SpecError("no profile files given");
  ProfileSet merged;
  for (const auto& p : paths) {
    ProfileSet one = parse_profile_csv(read_file(p), p.string(), opts);
    std::move(one.compute_samples.begin(), one.compute_samples.end(),
              std::back_inserter(merged.compute_samples));
    std::move(one.transfer_samples.begin(), one.transfer_samples.end(),
              std::back_inserter(merged.transfer_samples));
    merged.sampled_minibatches.insert(one.sampled_minibatches.begin(),
                                      one.sampled_minibatches.end());
    std::move(one.diagnostics.begin(), one.diagnostics.end(),
              std::back_inserter(merged.diagnostics));
  }
  return merged;
}

Flops scale_flops_count(Flops flops_base, int k, int k_base) {
  if (k <= 0) throw std::invalid_argument("minibatch must be positive");
  if (k_base <= 0) throw std::invalid_argument("k_base must be positive");
  using u128 = unsigned __int128;
  u128 numer = static_cast<u128>(flops_base) * static_cast<u128>(k);
  u128 denom = static_cast<u128>(k_base);
  // round to nearest; exact when the division is exact
  return static_cast<Flops>((numer + denom / 2) / denom);
}

Flops scale_flops(const PhaseLayer& phase, int k, int k_base) {
  return scale_flops_count(phase.flops_base, k, k_base);
}

double effective_bandwidth(const std::vector<TransferSample>& samples,
                           double fallback) {
  if (samples.empty()) return fallback;
  long double total_bytes = 0.0L;
  long double total_time = 0.0L;
  for (const auto& s : samples) {
    total_bytes += static_cast<long double>(s.bytes);
    total_time += static_cast<long double>(s.time_s);
  }
  return static_cast<double>(total_bytes / total_time);
}

}  // namespace swapsched
