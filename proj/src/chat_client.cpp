// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidebench/chat_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace guidebench {

std::chrono::milliseconds RetryPolicy::backoff(int retry, Rng& rng) const {
  double ms = static_cast<double>(initial_backoff.count()) * std::pow(multiplier, retry - 1);
  ms *= 1.0 + jitter * rng.uniform(-1.0, 1.0);
  return std::chrono::milliseconds(static_cast<long long>(std::max(0.0, ms)));
}

RateLimiter::RateLimiter(double requests_per_second) {
  if (requests_per_second > 0)
    interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / requests_per_second));
}

void RateLimiter::acquire() {
  if (interval_.count() == 0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

namespace {

struct Released {
  std::counting_semaphore<64>& sem;
  ~Released() { sem.release(); }
};

}  // namespace

ChatClient::ChatClient(ChatConfig config)
    : config_(std::move(config)),
      limiter_(config_.requests_per_second),
      in_flight_(std::clamp(config_.concurrency, 1, 64)) {
  const auto scheme = config_.base_url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("endpoint needs a scheme: " + config_.base_url);
  const auto slash = config_.base_url.find('/', scheme + 3);
  origin_ = config_.base_url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : config_.base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + config_.path;
}

ChatClient::Reply ChatClient::complete(const std::string& prompt, double temperature, Seed seed) {
  std::string key;
  if (!config_.api_key_env.empty()) {
    const char* v = std::getenv(config_.api_key_env.c_str());
    if (v == nullptr || *v == '\0')
      throw BackendError("credential variable " + config_.api_key_env + " is not set");
    key = v;
  }

  nlohmann::json body = {
      {"model", config_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", temperature},
      {"seed", static_cast<std::int64_t>(seed & 0x7fffffff)},
  };
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

  Rng jitter(derive_seed(seed, "backoff", config_.model));
  int status = 0;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(config_.retry.backoff(attempt - 1, jitter));
    limiter_.acquire();
    in_flight_.acquire();
    Released guard{in_flight_};

    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      status = 0;
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    status = res->status;
    if (status == 200) {
      try {
        auto doc = nlohmann::json::parse(res->body);
        return {doc.at("choices").at(0).at("message").at("content").get<std::string>(), attempt};
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("malformed completion response: ") + e.what(), status, attempt);
      }
    }
    last_error = "HTTP " + std::to_string(status);
    if (!RetryPolicy::retryable_status(status)) throw BackendError(last_error, status, attempt);
  }
  throw BackendError(last_error + " after " + std::to_string(config_.retry.max_attempts) + " attempts",
                     status, config_.retry.max_attempts);
}

}  // namespace guidebench
