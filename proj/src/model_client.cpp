#include "wmvqa/model_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "wmvqa/errors.hpp"
#include "wmvqa/util.hpp"

namespace wmvqa {

using nlohmann::json;

std::string build_prompt(const VqaItem& item) {
  std::string p = item.question;
  p += '\n';
  for (char c : kOptionLetters) {
    p += c;
    p += ". ";
    p += item.option(c);
    p += '\n';
  }
  p += is_multi_answer(item.category) ? "Answer with the option letters only." : "Answer with the option letter only.";
  return p;
}

void ModelEndpoint::validate() const {
  if (base_url.empty()) throw ValidationError("endpoint base_url is required");
  if (model_name.empty()) throw ValidationError("endpoint model name is required");
  if (!(timeout_s > 0)) throw ValidationError("endpoint timeout must be > 0");
  if (max_retries < 0) throw ValidationError("max_retries must be >= 0");
  if (max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
  if (!(backoff_initial_s >= 0) || !(backoff_max_s >= 0)) throw ValidationError("backoff delays must be >= 0");
  if (!api_key_env.empty() && std::getenv(api_key_env.c_str()) == nullptr)
    throw ValidationError("API key environment variable " + api_key_env + " is not set");
}

RateLimiter::RateLimiter(int max_in_flight, double requests_per_minute)
    : max_in_flight_(std::max(1, max_in_flight)) {
  if (requests_per_minute > 0)
    spacing_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(60.0 / requests_per_minute));
}

RateLimiter::Permit RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
  if (spacing_.count() > 0) {
    const auto now = std::chrono::steady_clock::now();
    const auto start = std::max(now, next_start_);
    next_start_ = start + spacing_;
    lock.unlock();
    std::this_thread::sleep_until(start);
  }
  return Permit(*this);
}

void RateLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

int RateLimiter::peak_in_flight() const {
  std::lock_guard lock(mu_);
  return peak_;
}

std::string chat_request_body(const std::string& model, const std::string& prompt, const DocumentImage& image) {
  const auto png = encode_png(image);
  json body{{"model", model},
            {"temperature", 0},
            {"messages",
             json::array({{{"role", "user"},
                           {"content", json::array({{{"type", "text"}, {"text", prompt}},
                                                    {{"type", "image_url"},
                                                     {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}}})}}})}};
  return body.dump();
}

std::string extract_reply_text(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("reply is not JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
      std::string out;
      for (const auto& part : content)
        if (part.value("type", "") == "text") out += part.value("text", "");
      return out;
    }
    if (content.is_null()) return {};
  } catch (const json::exception& e) {
    throw TransportError(std::string("reply lacks choices[0].message.content: ") + e.what());
  }
  throw TransportError("unsupported message content type");
}

HttpModelClient::HttpModelClient(ModelEndpoint endpoint, SleepFn sleep)
    : endpoint_(std::move(endpoint)),
      sleep_(sleep ? std::move(sleep) : SleepFn([](double s) {
        std::this_thread::sleep_for(std::chrono::duration<double>(s));
      })),
      limiter_(endpoint_.max_in_flight, endpoint_.requests_per_minute) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_.base_url, m, url_re))
    throw ValidationError("base_url must look like http(s)://host[:port][/prefix]: " + endpoint_.base_url);
  scheme_host_port_ = m[1].str();
  std::string prefix = m[2].str();
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/chat/completions";
}

ModelReply HttpModelClient::query(const VqaItem& item, const DocumentImage& image, const std::string& condition_id) {
  ModelReply reply{item.id, condition_id, {}, 0.0, 0, false, {}};
  const std::string body = chat_request_body(endpoint_.model_name, build_prompt(item), image);
  httplib::Headers headers;
  if (!endpoint_.api_key_env.empty()) {
    const char* key = std::getenv(endpoint_.api_key_env.c_str());
    if (!key) throw AuthError("API key environment variable " + endpoint_.api_key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const int max_attempts = endpoint_.max_retries + 1;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    reply.attempt_count = attempt;
    double retry_after = 0.0;
    bool retriable = false;
    {
      auto permit = limiter_.acquire();
      httplib::Client cli(scheme_host_port_);
      const auto secs = std::chrono::duration<double>(endpoint_.timeout_s);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      auto res = cli.Post(path_, headers, body, "application/json");

      if (!res) {
        reply.error = "transport: " + httplib::to_string(res.error());
        retriable = true;
      } else if (res->status == 401 || res->status == 403) {
        throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
      } else if (res->status == 429 || res->status >= 500) {
        reply.error = "HTTP " + std::to_string(res->status);
        retriable = true;
        if (res->has_header("Retry-After")) {
          try {
            retry_after = std::stod(res->get_header_value("Retry-After"));
          } catch (...) {
            // HTTP-date form is ignored; plain backoff applies.
          }
        }
      } else if (res->status >= 200 && res->status < 300) {
        try {
          reply.raw_text = extract_reply_text(res->body);
          reply.error.clear();
          reply.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          return reply;
        } catch (const TransportError& e) {
          reply.error = e.what();
        }
      } else {
        reply.error = "HTTP " + std::to_string(res->status);
      }
    }
    if (!retriable || attempt == max_attempts) break;
    const double backoff = std::min(endpoint_.backoff_max_s, endpoint_.backoff_initial_s * std::ldexp(1.0, attempt - 1));
    sleep_(std::min(endpoint_.backoff_max_s, std::max(backoff, retry_after)));
  }
  reply.unanswered = true;
  reply.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return reply;
}

// ---- mock ----

std::vector<double> region_lumas(const DocumentImage& image, const std::vector<Region>& regions) {
  std::vector<double> out;
  out.reserve(regions.size());
  const double W = image.width(), H = image.height();
  for (const auto& r : regions) {
    const int x0 = static_cast<int>(std::floor(r.x * W)), y0 = static_cast<int>(std::floor(r.y * H));
    const int x1 = static_cast<int>(std::ceil((r.x + r.w) * W)), y1 = static_cast<int>(std::ceil((r.y + r.h) * H));
    out.push_back(image.mean_luma(x0, y0, x1, y1));
  }
  return out;
}

void FlipIfDarkened::record_baseline(const VqaItem& item, const DocumentImage& clean) {
  baseline[item.id] = region_lumas(clean, regions);
}

std::string correct_reply(const VqaItem& item) {
  std::string out;
  for (char c : item.answer.letters()) {
    if (!out.empty()) out += ", ";
    out += c;
  }
  return out;
}

std::string wrong_reply(const VqaItem& item) {
  for (char c : kOptionLetters)
    if (!item.answer.contains(c)) return std::string(1, c);
  // ChartM item whose key is all of A-D: a strict subset is still wrong.
  return "A";
}

std::string mock_oracle(const VqaItem& item, const DocumentImage& image, const MockBehavior& behavior) {
  return std::visit(
      [&](const auto& b) -> std::string {
        using B = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<B, AlwaysCorrect>) {
          return correct_reply(item);
        } else if constexpr (std::is_same_v<B, AlwaysWrong>) {
          return wrong_reply(item);
        } else {
          const auto it = b.baseline.find(item.id);
          if (it == b.baseline.end()) return correct_reply(item);
          const auto now = region_lumas(image, b.regions);
          for (std::size_t i = 0; i < now.size(); ++i)
            if (std::abs(now[i] - it->second[i]) > b.threshold) return wrong_reply(item);
          return correct_reply(item);
        }
      },
      behavior);
}

MockModelClient::MockModelClient(MockBehavior behavior, std::string name)
    : behavior_(std::move(behavior)), name_(std::move(name)) {}

void MockModelClient::prepare(const EvalDataset& clean) {
  auto* flip = std::get_if<FlipIfDarkened>(&behavior_);
  if (!flip) return;
  for (const auto& item : clean.items) flip->record_baseline(item, load_image(clean.image_file(item)));
}

ModelReply MockModelClient::query(const VqaItem& item, const DocumentImage& image, const std::string& condition_id) {
  {
    std::lock_guard lock(mu_);
    ++queries_;
  }
  return {item.id, condition_id, mock_oracle(item, image, behavior_), 0.0, 1, false, {}};
}

long MockModelClient::query_count() const {
  std::lock_guard lock(mu_);
  return queries_;
}

}  // namespace wmvqa
