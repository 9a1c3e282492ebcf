#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "wmvqa/corpus.hpp"
#include "wmvqa/image.hpp"

namespace wmvqa {

// Bumped whenever build_prompt changes, which invalidates reply caches.
inline constexpr int kPromptTemplateVersion = 1;

// Question, then "A. ..." option lines, then the answer instruction.
std::string build_prompt(const VqaItem& item);

struct ModelEndpoint {
  std::string base_url;     // e.g. "http://127.0.0.1:8000/v1"; POSTs go to <base_url>/chat/completions
  std::string model_name;
  std::string api_key_env;  // environment variable holding the key; empty = no auth header
  double timeout_s = 120.0;
  int max_retries = 3;
  int max_in_flight = 4;
  double backoff_initial_s = 1.0;
  double backoff_max_s = 30.0;
  double requests_per_minute = 0.0;  // 0 = unlimited

  void validate() const;
};

struct ModelReply {
  std::string item_id;
  std::string condition_id;
  std::string raw_text;  // verbatim
  double latency_s = 0.0;
  int attempt_count = 0;
  bool unanswered = false;  // transport failure after retries
  std::string error;
};

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual std::string model_name() const = 0;
  // Thread-safe. Must never throw for transport failures (they become
  // unanswered replies); AuthError is the only exception that escapes.
  virtual ModelReply query(const VqaItem& item, const DocumentImage& image, const std::string& condition_id) = 0;
  // Called once with the clean corpus before any query.
  virtual void prepare(const EvalDataset& /*clean*/) {}
};

// Concurrency cap plus optional minimum spacing between request starts,
// shared by every worker that uses the same client.
class RateLimiter {
 public:
  RateLimiter(int max_in_flight, double requests_per_minute);

  class Permit {
   public:
    explicit Permit(RateLimiter& l) : l_(&l) {}
    Permit(Permit&& o) noexcept : l_(std::exchange(o.l_, nullptr)) {}
    Permit(const Permit&) = delete;
    ~Permit() {
      if (l_) l_->release();
    }

   private:
    RateLimiter* l_;
  };

  [[nodiscard]] Permit acquire();
  int peak_in_flight() const;

 private:
  void release();

  mutable std::mutex mu_;
  std::condition_variable cv_;
  int max_in_flight_;
  int in_flight_ = 0;
  int peak_ = 0;
  std::chrono::steady_clock::duration spacing_{};
  std::chrono::steady_clock::time_point next_start_{};
};

// OpenAI-style chat-completions client: temperature 0, image as a base64 PNG
// data URI, retries on 429/5xx/transport errors with exponential backoff.
class HttpModelClient : public ModelClient {
 public:
  using SleepFn = std::function<void(double seconds)>;

  explicit HttpModelClient(ModelEndpoint endpoint, SleepFn sleep = {});

  std::string model_name() const override { return endpoint_.model_name; }
  ModelReply query(const VqaItem& item, const DocumentImage& image, const std::string& condition_id) override;

  const RateLimiter& limiter() const { return limiter_; }

 private:
  ModelEndpoint endpoint_;
  SleepFn sleep_;
  RateLimiter limiter_;
  std::string scheme_host_port_;
  std::string path_;
};

// JSON request body for one query; exposed for tests.
std::string chat_request_body(const std::string& model, const std::string& prompt, const DocumentImage& image);
// Reads choices[0].message.content (string, or concatenated text parts).
// Throws TransportError on malformed bodies.
std::string extract_reply_text(const std::string& body);

// ---- deterministic mock ----

// Rectangle in fractions of the image size.
struct Region {
  double x = 0, y = 0, w = 0, h = 0;
};

struct AlwaysCorrect {};
struct AlwaysWrong {};
// Answers wrongly iff the mean luma inside any region differs from the item's
// clean-image baseline by more than `threshold` (0-255 scale).
struct FlipIfDarkened {
  std::vector<Region> regions;
  double threshold = 10.0;
  std::map<std::string, std::vector<double>> baseline;  // item id -> luma per region

  void record_baseline(const VqaItem& item, const DocumentImage& clean);
};

using MockBehavior = std::variant<AlwaysCorrect, AlwaysWrong, FlipIfDarkened>;

// Per-region mean luma of `image`, regions mapped to pixel rectangles.
std::vector<double> region_lumas(const DocumentImage& image, const std::vector<Region>& regions);

std::string correct_reply(const VqaItem& item);
std::string wrong_reply(const VqaItem& item);

// Items without a recorded baseline are answered correctly.
std::string mock_oracle(const VqaItem& item, const DocumentImage& image, const MockBehavior& behavior);

class MockModelClient : public ModelClient {
 public:
  explicit MockModelClient(MockBehavior behavior, std::string name = "mock");

  std::string model_name() const override { return name_; }
  ModelReply query(const VqaItem& item, const DocumentImage& image, const std::string& condition_id) override;
  // Records FlipIfDarkened baselines from the clean images.
  void prepare(const EvalDataset& clean) override;

  long query_count() const;

 private:
  MockBehavior behavior_;
  std::string name_;
  mutable std::mutex mu_;
  long queries_ = 0;
};

}  // namespace wmvqa
