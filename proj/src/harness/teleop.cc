// Copyright 2026 The clothpb Authors
//
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

#include "clothpb/harness/teleop.h"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/core/detail/base64.hpp>
#include <boost/beast/websocket.hpp>

#include "clothpb/error.h"
#include "clothpb/harness/dataset.h"
#include "clothpb/harness/experiments.h"
#include "clothpb/image.h"
#include "clothpb/sim/raster.h"

namespace clothpb::harness {
namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

// Outgoing state messages beyond this backlog are dropped for slow clients.
constexpr std::size_t kMaxQueue = 64;

std::string Base64(const std::string& bytes) {
  std::string out(beast::detail::base64::encoded_size(bytes.size()), '\0');
  out.resize(beast::detail::base64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

json MaterialJson(const sim::MaterialParams& m) {
  return {{"c_damp", m.c_damp}, {"c_mass", m.c_mass}};
}

}  // namespace

json HelloMessage(const sim::ArmModel& arm, const sim::MaterialParams& material, double state_hz,
                  bool has_token) {
  return {{"type", "hello"},
          {"limits",
           {{"theta",
             {{arm.joint_limits[0].min, arm.joint_limits[0].max},
              {arm.joint_limits[1].min, arm.joint_limits[1].max}}},
            {"k_ref", {arm.k_min, arm.k_max}}}},
          {"link_lengths", arm.link_lengths},
          {"material", MaterialJson(material)},
          {"state_hz", state_hz},
          {"has_token", has_token}};
}

json StateMessage(const sim::WorldConfig& world, const sim::WorldState& state,
                  const sim::ServoCommand& command, bool recording) {
  json cloth = json::array();
  for (const sim::Vec2& p : state.node_pos) cloth.push_back({p.x(), p.y()});
  const sim::HandFrame hand = sim::ForwardKinematics(world.arm, state.theta);
  return {{"type", "state"},
          {"t", state.t},
          {"theta", state.theta},
          {"theta_dot", state.theta_dot},
          {"theta_ref", command.theta_ref},
          {"k_ref", command.k_ref},
          {"arm",
           {{world.arm.base.x(), world.arm.base.y()},
            {hand.elbow.x(), hand.elbow.y()},
            {hand.position.x(), hand.position.y()}}},
          {"cloth", cloth},
          {"recording", recording}};
}

json ErrorMessage(const std::string& msg) { return {{"type", "error"}, {"msg", msg}}; }

class Session;

struct TeleopService::Impl {
  explicit Impl(TeleopOptions o) : options(std::move(o)), acceptor(ioc) {}

  TeleopOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::thread io_thread;
  std::thread sim_thread;
  std::atomic<bool> running{false};
  std::mutex stop_mu;
  std::condition_variable stop_cv;
  bool stopped = false;

  // Network-thread state.
  std::set<std::shared_ptr<Session>> sessions;
  Session* token_holder = nullptr;

  // Shared between threads under `mu`.
  std::mutex mu;
  std::optional<sim::ServoCommand> mailbox;
  sim::MaterialParams material;
  std::unique_ptr<EpisodeWriter> writer;
  Session* recorder = nullptr;
  std::optional<RunDirectory> run;

  sim::MaterialParams CurrentMaterial() {
    std::lock_guard lock(mu);
    return material;
  }
  void Accept();
  void Broadcast(std::shared_ptr<const std::string> msg);
  void OnMessage(Session* s, const std::string& text);
  void OnClose(Session* s);
  void SimLoop();
  json StartRecording(Session* s, const json& msg);
  json StopRecording(const std::vector<std::string>& flags);
};

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket socket, TeleopService::Impl* service)
      : ws_(std::move(socket)), service_(std::move(service)) {}

  void Run() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->service_->sessions.insert(self);
      self->Send(std::make_shared<const std::string>(
          HelloMessage(self->service_->options.config.world.arm, self->service_->CurrentMaterial(),
                       self->service_->options.state_hz, false)
              .dump()));
      self->Read();
    });
  }

  // Network thread only.
  void Send(std::shared_ptr<const std::string> msg) {
    if (closed_) return;
    if (queue_.size() >= kMaxQueue) queue_.erase(queue_.begin() + 1);
    queue_.push_back(std::move(msg));
    if (queue_.size() == 1) Write();
  }

  // After the network loop has stopped.
  void ForceClose() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

  void Close() {
    if (closed_) return;
    ws_.async_close(websocket::close_code::going_away, [self = shared_from_this()](beast::error_code) {});
  }

 private:
  void Read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->Finish();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->service_->OnMessage(self.get(), text);
      self->Read();
    });
  }

  void Write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->Finish();
                        return;
                      }
                      self->queue_.pop_front();
                      if (!self->queue_.empty()) self->Write();
                    });
  }

  void Finish() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    service_->OnClose(this);
    service_->sessions.erase(shared_from_this());
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  TeleopService::Impl* service_;
  bool closed_ = false;
};

void TeleopService::Impl::Accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<Session>(std::move(socket), this)->Run();
    Accept();
  });
}

void TeleopService::Impl::Broadcast(std::shared_ptr<const std::string> msg) {
  for (const auto& s : sessions) s->Send(msg);
}

void TeleopService::Impl::OnMessage(Session* s, const std::string& text) {
  auto reply = [&](const json& j) { s->Send(std::make_shared<const std::string>(j.dump())); };
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception&) {
    reply(ErrorMessage("malformed message: not JSON"));
    return;
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    reply(ErrorMessage("malformed message: missing string field 'type'"));
    return;
  }
  const std::string type = msg["type"];
  const bool may_command = token_holder == nullptr || token_holder == s;
  try {
    if (type == "command") {
      if (!may_command) {
        reply(ErrorMessage("command token held by another client"));
        return;
      }
      const json& th = msg.at("theta_ref");
      if (!th.is_array() || th.size() != 2 || !th[0].is_number() || !th[1].is_number()) {
        reply(ErrorMessage("command.theta_ref must be an array of two numbers"));
        return;
      }
      sim::ServoCommand cmd;
      cmd.theta_ref = {th[0].get<double>(), th[1].get<double>()};
      {
        std::lock_guard lock(mu);
        cmd.k_ref = mailbox ? mailbox->k_ref : options.config.collect.fixed_gain;
      }
      if (msg.contains("k_ref")) {
        if (!msg["k_ref"].is_number()) {
          reply(ErrorMessage("command.k_ref must be a number"));
          return;
        }
        cmd.k_ref = msg["k_ref"].get<double>();
      }
      cmd = sim::ClipCommand(options.config.world.arm, cmd);
      if (token_holder != s) {
        token_holder = s;
        reply({{"type", "token"}, {"has_token", true}});
      }
      std::lock_guard lock(mu);
      mailbox = cmd;
    } else if (type == "release") {
      if (token_holder == s) token_holder = nullptr;
      reply({{"type", "token"}, {"has_token", false}});
    } else if (type == "record") {
      if (!may_command) {
        reply(ErrorMessage("command token held by another client"));
        return;
      }
      const std::string action = msg.at("action").get<std::string>();
      if (action == "start") {
        reply(StartRecording(s, msg));
      } else if (action == "stop") {
        reply(StopRecording({}));
      } else {
        reply(ErrorMessage("record.action must be 'start' or 'stop'"));
      }
    } else {
      reply(ErrorMessage("unknown message type '" + type + "'"));
    }
  } catch (const json::exception& e) {
    reply(ErrorMessage(std::string("malformed ") + type + " message: " + e.what()));
  } catch (const Error& e) {
    reply(ErrorMessage(e.what()));
  }
}

json TeleopService::Impl::StartRecording(Session* s, const json& msg) {
  sim::MaterialParams m;
  {
    std::lock_guard lock(mu);
    m = material;
  }
  if (msg.contains("material")) {
    m = {msg["material"].at("c_damp").get<double>(), msg["material"].at("c_mass").get<double>()};
    m.Validate();
  }
  std::lock_guard lock(mu);
  if (writer) return ErrorMessage("already recording");
  // Trial id: the material's index in the grid, otherwise past its end.
  const auto grid = options.config.Materials();
  int trial = static_cast<int>(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i].c_damp == m.c_damp && grid[i].c_mass == m.c_mass) trial = static_cast<int>(i);
  }
  material = m;
  const auto path = run->NextEpisodePath();
  writer = std::make_unique<EpisodeWriter>(path, trial, m, "teleop", 0);
  recorder = s;
  return {{"type", "record"}, {"status", "started"}, {"episode", path.filename().string()},
          {"trial", trial}, {"material", MaterialJson(m)}};
}

json TeleopService::Impl::StopRecording(const std::vector<std::string>& flags) {
  std::lock_guard lock(mu);
  if (!writer) return ErrorMessage("not recording");
  writer->Finalize(flags);
  json ack = {{"type", "record"},
              {"status", "stopped"},
              {"episode", writer->dir().filename().string()},
              {"steps", writer->steps()},
              {"flags", flags}};
  writer.reset();
  recorder = nullptr;
  return ack;
}

void TeleopService::Impl::OnClose(Session* s) {
  if (token_holder == s) token_holder = nullptr;
  bool mine;
  {
    std::lock_guard lock(mu);
    mine = writer && recorder == s;
  }
  if (mine) StopRecording({"disconnected"});
}

void TeleopService::Impl::SimLoop() {
  const sim::WorldConfig& world = options.config.world;
  const int per_tick = world.substeps_per_tick;
  const int broadcasts_per_tick = std::max(1, static_cast<int>(std::lround(
                                                  options.state_hz * world.dt * per_tick)));
  const int chunk = per_tick / broadcasts_per_tick;
  sim::WorldState state;
  sim::ServoCommand cmd;
  {
    std::lock_guard lock(mu);
    cmd.theta_ref = {0.6, -1.2};
    cmd.k_ref = options.config.collect.fixed_gain;
    state = sim::SettledState(world, material, cmd.theta_ref, options.config.collect.settle_seconds);
  }
  auto next = std::chrono::steady_clock::now();
  const auto period = std::chrono::duration<double>(
      options.speed > 0 ? world.dt * chunk / options.speed : 0.0);
  long tick = 0;
  while (running) {
    sim::MaterialParams m;
    {
      std::lock_guard lock(mu);
      if (mailbox) cmd = *mailbox;
      m = material;
      if (writer) {
        StepRow r;
        r.tick = tick;
        r.t = state.t;
        r.theta = state.theta;
        r.theta_dot = state.theta_dot;
        r.theta_ref = cmd.theta_ref;
        r.k_ref = cmd.k_ref;
        writer->Append(r, sim::Rasterize(world.cloth, state, options.config.camera));
      }
    }
    for (int b = 0; b < broadcasts_per_tick && running; ++b) {
      json msg = StateMessage(world, state, cmd, [&] {
        std::lock_guard lock(mu);
        return writer != nullptr;
      }());
      if (b == 0 && options.frames) {
        msg["frame"] = Base64(EncodePgm(sim::Rasterize(world.cloth, state, options.config.camera)));
      }
      auto text = std::make_shared<const std::string>(msg.dump());
      net::post(ioc, [this, text] { Broadcast(text); });
      try {
        for (int i = 0; i < chunk; ++i) state = sim::Step(world, state, cmd, m, world.dt);
      } catch (const Error& e) {
        // Restart from rest rather than take the service down.
        auto err = std::make_shared<const std::string>(
            ErrorMessage(std::string("simulation reset: ") + e.what()).dump());
        net::post(ioc, [this, err] { Broadcast(err); });
        state = sim::SettledState(world, m, cmd.theta_ref, 1.0);
      }
      if (options.speed > 0) {
        next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
        std::this_thread::sleep_until(next);
      }
    }
    ++tick;
  }
}

TeleopService::TeleopService(TeleopOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->options.config.Validate();
  impl_->material = impl_->options.material;
  impl_->material.Validate();
  if (impl_->options.state_hz < 15.0) {
    throw Error(ErrorKind::kConfig, "state_hz must be at least 15");
  }
}

TeleopService::~TeleopService() { Stop(); }

unsigned short TeleopService::Start() {
  Impl& s = *impl_;
  const auto& ds = s.options.dataset;
  if (std::filesystem::exists(ds / "meta.json")) {
    s.run = RunDirectory::Open(ds);
  } else {
    const auto grid = s.options.config.Materials();
    json meta = {{"kind", "clothpb-dataset"},
                 {"seed", s.options.config.seed},
                 {"dt", s.options.config.world.dt},
                 {"substeps_per_tick", s.options.config.world.substeps_per_tick},
                 {"tick_hz", 1.0 / (s.options.config.world.dt * s.options.config.world.substeps_per_tick)},
                 {"policy", "teleop"},
                 {"gain_channel", false}};
    for (const auto& m : grid) meta["materials"].push_back(MaterialJson(m));
    s.run = RunDirectory::Create(ds, meta);
  }
  const tcp::endpoint ep(net::ip::make_address(s.options.address), s.options.port);
  try {
    s.acceptor.open(ep.protocol());
    s.acceptor.set_option(net::socket_base::reuse_address(true));
    s.acceptor.bind(ep);
    s.acceptor.listen();
  } catch (const boost::system::system_error& e) {
    throw Error(ErrorKind::kIo, "cannot listen on " + s.options.address + ":" +
                                    std::to_string(s.options.port) + ": " + e.what());
  }
  s.running = true;
  s.Accept();
  s.io_thread = std::thread([&s] {
    auto guard = net::make_work_guard(s.ioc);
    s.ioc.run();
  });
  s.sim_thread = std::thread([&s] { s.SimLoop(); });
  return s.acceptor.local_endpoint().port();
}

void TeleopService::Stop() {
  Impl& s = *impl_;
  if (!s.running.exchange(false)) return;
  if (s.sim_thread.joinable()) s.sim_thread.join();
  net::post(s.ioc, [&s] {
    s.acceptor.close();
    for (const auto& session : s.sessions) session->Close();
  });
  {
    std::lock_guard lock(s.mu);
    if (s.writer) s.writer->Finalize({"service_stopped"});
    s.writer.reset();
  }
  // Give close handshakes a moment, then stop the loop.
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  s.ioc.stop();
  if (s.io_thread.joinable()) s.io_thread.join();
  // Dropping the sessions closes any socket that did not finish closing.
  for (const auto& session : s.sessions) session->ForceClose();
  s.sessions.clear();
  {
    std::lock_guard lock(s.stop_mu);
    s.stopped = true;
  }
  s.stop_cv.notify_all();
}

void TeleopService::Wait() {
  Impl& s = *impl_;
  std::unique_lock lock(s.stop_mu);
  s.stop_cv.wait(lock, [&] { return s.stopped; });
}

}  // namespace clothpb::harness
