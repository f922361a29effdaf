#pragma once

#include <coroutine>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "beepsim/metrics.hpp"
#include "beepsim/random.hpp"

namespace beepsim {

enum class station_action : unsigned char { pause = 0, beep = 1 };
enum class channel_feedback : unsigned char { silence = 0, beep = 1 };

struct round_trace {
  u64 round_index = 0;
  u64 beeper_count = 0;  // observer-only diagnostic; never reaches a station
  channel_feedback feedback = channel_feedback::silence;
};

class invariant_violation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

// Protocol subroutine frames are created and destroyed in strict LIFO order
// within a single engine step, always on the thread that runs the trial. A
// per-thread freelist keyed by frame size keeps the per-call detect/search
// coroutines off the general heap.
class frame_pool {
 public:
  void* allocate(std::size_t n) {
    for (auto& b : buckets_) {
      if (b.size == n && !b.free.empty()) {
        void* p = b.free.back();
        b.free.pop_back();
        return p;
      }
    }
    return ::operator new(n);
  }

  void release(void* p, std::size_t n) noexcept {
    for (auto& b : buckets_) {
      if (b.size == n) {
        b.free.push_back(p);
        return;
      }
    }
    if (buckets_.size() < 16) {
      buckets_.push_back({n, {p}});
      return;
    }
    ::operator delete(p);
  }

  ~frame_pool() {
    for (auto& b : buckets_)
      for (void* p : b.free) ::operator delete(p);
  }

 private:
  struct bucket {
    std::size_t size;
    std::vector<void*> free;
  };
  std::vector<bucket> buckets_;
};

inline frame_pool& local_frame_pool() {
  thread_local frame_pool pool;
  return pool;
}

template <typename T>
struct promise_result {
  std::optional<T> value;
  void return_value(T v) { value.emplace(std::move(v)); }
  T take() { return std::move(*value); }
};

template <>
struct promise_result<void> {
  void return_void() {}
  void take() {}
};

}  // namespace detail

/// Coroutine task for station programs and their subroutines. A task starts
/// suspended; awaiting it transfers control into it, and its completion
/// resumes the awaiter. The round engine drives the root task and resumes
/// the innermost suspended coroutine recorded in the station context.
template <typename T>
class [[nodiscard]] proto_task {
 public:
  struct promise_type : detail::promise_result<T> {
    std::coroutine_handle<> continuation{};
    std::exception_ptr error{};

    proto_task get_return_object() {
      return proto_task{std::coroutine_handle<promise_type>::from_promise(*this)};
    }
    std::suspend_always initial_suspend() noexcept { return {}; }

    struct final_awaiter {
      bool await_ready() noexcept { return false; }
      std::coroutine_handle<> await_suspend(std::coroutine_handle<promise_type> h) noexcept {
        auto cont = h.promise().continuation;
        return cont ? cont : std::noop_coroutine();
      }
      void await_resume() noexcept {}
    };
    final_awaiter final_suspend() noexcept { return {}; }

    void unhandled_exception() { error = std::current_exception(); }

    static void* operator new(std::size_t n) { return detail::local_frame_pool().allocate(n); }
    static void operator delete(void* p, std::size_t n) noexcept {
      detail::local_frame_pool().release(p, n);
    }
  };

  proto_task(proto_task&& other) noexcept : handle_(std::exchange(other.handle_, {})) {}
  proto_task(const proto_task&) = delete;
  proto_task& operator=(proto_task&&) = delete;
  proto_task& operator=(const proto_task&) = delete;
  ~proto_task() {
    if (handle_) handle_.destroy();
  }

  bool await_ready() const noexcept { return false; }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> parent) noexcept {
    handle_.promise().continuation = parent;
    return handle_;
  }
  T await_resume() {
    if (handle_.promise().error) std::rethrow_exception(handle_.promise().error);
    return handle_.promise().take();
  }

  // Root-program interface, driven by the engine via the station wrapper.
  void resume() { handle_.resume(); }
  bool done() const { return handle_.done(); }
  void rethrow_if_failed() const {
    if (handle_ && handle_.done() && handle_.promise().error)
      std::rethrow_exception(handle_.promise().error);
  }

 private:
  explicit proto_task(std::coroutine_handle<promise_type> h) : handle_(h) {}
  std::coroutine_handle<promise_type> handle_;
};

class station_context;

/// Awaitable for one channel round: publishes the station's action, suspends
/// it, and resumes with the round's feedback once the engine delivers it.
struct round_request {
  station_context* ctx;
  station_action act;

  bool await_ready() const noexcept { return false; }
  void await_suspend(std::coroutine_handle<> h) noexcept;
  channel_feedback await_resume() const noexcept;
};

/// Test seam: lets a rig decide detect-collision outcomes (e.g. a perfect
/// detector) while the on-channel behavior stays unchanged.
struct detect_resolver {
  virtual ~detect_resolver() = default;
  virtual void note(i64 call_index, bool participant) = 0;
  virtual bool resolve(i64 call_index) = 0;
};

/// Everything a station program may touch: its private random source, the
/// round awaitable, its outputs, and observer-side telemetry. A station's
/// next action depends only on its initial knowledge, the feedback sequence,
/// and its private bits; the engine enforces the rest of the model.
class station_context {
 public:
  explicit station_context(u64 seed) : rng_(seed) {}
  station_context(std::unique_ptr<bit_source> bits, u64 label)
      : rng_(std::move(bits), label) {}

  round_request round(station_action a) { return {this, a}; }
  counted_random_source& rng() { return rng_; }
  const counted_random_source& rng() const { return rng_; }

  // protocol outputs
  std::optional<i64> name;
  i64 bench_result = 0;
  std::string bench_text;

  // observer-side telemetry (write-only for the protocol)
  station_stats stats;
  mirror_state mirror;
  bool mirror_strings = false;
  std::vector<scan_pass_record> lv_passes;
  std::vector<stage_record> mc_stages;
  detect_resolver* detect_override = nullptr;

  // engine side
  station_action pending_action = station_action::pause;
  channel_feedback last_feedback = channel_feedback::silence;
  std::coroutine_handle<> resume_point{};
  u64 feedback_seen = 0;

 private:
  counted_random_source rng_;
};

inline void round_request::await_suspend(std::coroutine_handle<> h) noexcept {
  ctx->pending_action = act;
  ctx->resume_point = h;
}

inline channel_feedback round_request::await_resume() const noexcept {
  return ctx->last_feedback;
}

using station_program = proto_task<void>;
using program_factory = std::function<station_program(station_context&)>;

/// Recipe for building a station: a seed (or scripted source) plus the
/// program it runs. Blueprints are reusable, which is what lets the
/// isolation audit re-instantiate stations from scratch.
struct station_blueprint {
  u64 seed = 0;
  program_factory program;
  std::function<std::unique_ptr<bit_source>()> source_factory;  // optional test hook
};

class station {
 public:
  explicit station(const station_blueprint& bp)
      : ctx_(bp.source_factory
                 ? std::make_unique<station_context>(bp.source_factory(), bp.seed)
                 : std::make_unique<station_context>(bp.seed)),
        program_(bp.program(*ctx_)) {}

  station(station&&) noexcept = default;

  /// Run to the first round request (or completion). A station is at a round
  /// boundary exactly when a resume point is posted; a null resume point
  /// after running means the program finished.
  void start() {
    program_.resume();
    program_.rethrow_if_failed();
  }

  bool done() const { return !ctx_->resume_point; }
  station_action pending_action() const { return ctx_->pending_action; }

  /// Deliver one round of feedback and run to the next round request.
  void deliver(channel_feedback fb) {
    ctx_->last_feedback = fb;
    ctx_->feedback_seen += 1;
    auto h = std::exchange(ctx_->resume_point, std::coroutine_handle<>{});
    h.resume();
    program_.rethrow_if_failed();
  }

  void rethrow_if_failed() const { program_.rethrow_if_failed(); }

  station_context& context() { return *ctx_; }
  const station_context& context() const { return *ctx_; }

 private:
  std::unique_ptr<station_context> ctx_;
  station_program program_;
};

/// The shared medium: OR-semantics feedback over one action per station per
/// round, with a trace entry appended per round.
class beep_channel {
 public:
  channel_feedback run_round(std::span<const station_action> actions) {
    if (actions.empty()) throw std::invalid_argument("run_round: no stations attached");
    u64 beepers = 0;
    for (auto a : actions) beepers += (a == station_action::beep) ? 1 : 0;
    const auto fb = beepers > 0 ? channel_feedback::beep : channel_feedback::silence;
    trace_.push_back({trace_.size(), beepers, fb});
    return fb;
  }

  const std::vector<round_trace>& trace() const { return trace_; }
  std::vector<round_trace> take_trace() { return std::move(trace_); }

 private:
  std::vector<round_trace> trace_;
};

struct execution_record {
  std::vector<round_trace> trace;
  // per-station action log, only filled when recording is enabled
  std::vector<std::vector<station_action>> actions;
  bool completed = false;
};

/// An execution hit the safety cap without every station terminating.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(const std::string& what, execution_record partial)
      : std::runtime_error(what),
        partial_(std::make_shared<execution_record>(std::move(partial))) {}
  const execution_record& partial() const { return *partial_; }

 private:
  std::shared_ptr<execution_record> partial_;
};

/// Safety bound on execution length; generous multiple of the expected
/// n·lg n round count, so hitting it is reported as divergence rather than
/// silently extended.
constexpr u64 default_max_rounds(i64 n) {
  const u64 lg1 = static_cast<u64>(ceil_lg(n)) + 1;
  return 64 * static_cast<u64>(n) * lg1 * lg1;
}

struct engine_options {
  u64 max_rounds = 1u << 20;
  bool record_actions = false;
  // called after each round's feedback has been delivered to every station
  std::function<void(const round_trace&, const std::vector<station>&)> round_observer;
};

/// Deterministic single-threaded round engine. Stations are polled in index
/// order; the feedback is a pure function of the action multiset, so polling
/// order cannot leak into the protocol.
class lockstep_engine {
 public:
  explicit lockstep_engine(engine_options opt = {}) : opt_(std::move(opt)) {}

  execution_record run(std::vector<station>& stations) {
    if (stations.empty()) throw std::invalid_argument("execute: empty station set");
    const std::size_t n = stations.size();
    execution_record rec;
    if (opt_.record_actions) rec.actions.assign(n, {});
    std::vector<station_action> acts(n, station_action::pause);
    std::vector<station_context*> ctxs;
    ctxs.reserve(n);
    beep_channel channel;

    for (auto& s : stations) {
      s.start();
      ctxs.push_back(&s.context());
    }
    for (;;) {
      bool all_done = true;
      for (std::size_t i = 0; i < n; ++i) {
        const auto* c = ctxs[i];
        if (c->resume_point) {
          all_done = false;
          acts[i] = c->pending_action;
        } else {
          acts[i] = station_action::pause;
        }
      }
      if (all_done) break;
      if (channel.trace().size() >= opt_.max_rounds) {
        rec.trace = channel.take_trace();
        throw divergence_error("execution exceeded the max_rounds cap", std::move(rec));
      }
      const auto fb = channel.run_round(acts);
      if (opt_.record_actions)
        for (std::size_t i = 0; i < n; ++i) rec.actions[i].push_back(acts[i]);
      for (std::size_t i = 0; i < n; ++i) {
        auto* c = ctxs[i];
        if (!c->resume_point) continue;
        c->last_feedback = fb;
        c->feedback_seen += 1;
        auto h = std::exchange(c->resume_point, std::coroutine_handle<>{});
        h.resume();
        if (!c->resume_point) stations[i].rethrow_if_failed();
      }
      if (opt_.round_observer) opt_.round_observer(channel.trace().back(), stations);
    }
    rec.trace = channel.take_trace();
    rec.completed = true;
    return rec;
  }

 private:
  engine_options opt_;
};

/// Replays every station alone against the recorded feedback sequence and
/// checks that it reproduces its recorded actions exactly. True for any
/// program whose actions depend only on feedback and private bits.
inline bool isolation_audit(const execution_record& rec,
                            std::span<const station_blueprint> blueprints) {
  if (rec.actions.size() != blueprints.size()) return false;
  for (std::size_t i = 0; i < blueprints.size(); ++i) {
    station replay(blueprints[i]);
    replay.start();
    const auto& recorded = rec.actions[i];
    if (recorded.size() != rec.trace.size()) return false;
    for (std::size_t r = 0; r < rec.trace.size(); ++r) {
      const auto act = replay.done() ? station_action::pause : replay.pending_action();
      if (act != recorded[r]) return false;
      if (!replay.done()) replay.deliver(rec.trace[r].feedback);
    }
  }
  return true;
}

inline void write_trace_csv(std::ostream& os, const std::vector<round_trace>& trace) {
  os << "round,beepers,feedback\n";
  for (const auto& t : trace)
    os << t.round_index << ',' << t.beeper_count << ','
       << (t.feedback == channel_feedback::beep ? 1 : 0) << '\n';
}

}  // namespace beepsim
