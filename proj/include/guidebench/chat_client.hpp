// Copyright 2026 The guidebench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <mutex>
#include <semaphore>
#include <stdexcept>
#include <string>

#include "guidebench/random.hpp"

namespace guidebench {

class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& what, int status = 0, int attempts = 0)
      : std::runtime_error(what), status_(status), attempts_(attempts) {}

  /// Last HTTP status seen, 0 for transport errors.
  int status() const { return status_; }
  int attempts() const { return attempts_; }

 private:
  int status_;
  int attempts_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  /// Relative jitter: the delay is scaled by a factor in [1 - jitter, 1 + jitter].
  double jitter = 0.25;

  /// Delay before retry number `retry` (1 = first retry).
  std::chrono::milliseconds backoff(int retry, Rng& rng) const;
  static bool retryable_status(int status) { return status == 429 || status >= 500; }
};

/// Spaces out acquisitions by at least 1/requests_per_second across threads.
/// A rate of 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second);
  void acquire();

 private:
  std::mutex mu_;
  std::chrono::steady_clock::duration interval_{};
  std::chrono::steady_clock::time_point next_{};
};

struct ChatConfig {
  /// "http://host:port" or "https://host", optionally with a path prefix.
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
  /// Name of the environment variable holding the bearer token (may be empty).
  std::string api_key_env;
  RetryPolicy retry;
  int concurrency = 4;
  double requests_per_second = 0.0;
  std::chrono::seconds timeout{120};
};

/// OpenAI-compatible chat-completion client. One fresh single-message
/// conversation per call; no state is shared between calls.
class ChatClient {
 public:
  explicit ChatClient(ChatConfig config);

  struct Reply {
    std::string text;
    int attempts = 0;
  };

  /// Retries transport errors, 429 and 5xx per the policy, then throws
  /// BackendError. Other 4xx fail immediately.
  Reply complete(const std::string& prompt, double temperature, Seed seed);

  const ChatConfig& config() const { return config_; }

 private:
  ChatConfig config_;
  std::string origin_;
  std::string path_;
  RateLimiter limiter_;
  std::counting_semaphore<64> in_flight_;
};

}  // namespace guidebench
