#include "mixface/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mixface/error.hpp"

namespace mixface {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kFormat = "mixface-checkpoint";

[[noreturn]] void io_fail(const fs::path& p, const std::string& what) {
  throw Error(Errc::Io, p.string() + ": " + what);
}

json header_json(const TrainHeader& h) {
  json j = {{"loss", to_string(h.loss)},
            {"sampler", to_string(h.sampler)},
            {"s1", h.margins.s1},
            {"s2", h.margins.s2},
            {"m", h.margins.m},
            {"epsilon", nullptr},
            {"num_classes", h.num_classes},
            {"expected_negatives", h.expected_negatives},
            {"batch_size", h.batch_size},
            {"steps_per_epoch", h.steps_per_epoch}};
  if (h.epsilon) j["epsilon"] = *h.epsilon;
  return j;
}

TrainHeader header_from(const json& j) {
  TrainHeader h;
  h.loss = parse_loss_kind(j.at("loss").get<std::string>());
  h.sampler = parse_sampler_kind(j.at("sampler").get<std::string>());
  h.margins.s1 = j.at("s1");
  h.margins.s2 = j.at("s2");
  h.margins.m = j.at("m");
  if (!j.at("epsilon").is_null()) h.epsilon = j.at("epsilon").get<double>();
  h.num_classes = j.at("num_classes");
  h.expected_negatives = j.at("expected_negatives");
  h.batch_size = j.at("batch_size");
  h.steps_per_epoch = j.at("steps_per_epoch");
  return h;
}

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int k = 0; k < 8; ++k) r |= ((v >> (8 * k)) & 0xffu) << (8 * (7 - k));
    return r;
  }
  return v;
}

void put(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(m.data()[i]));
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
}

void get(std::istream& in, Matrix& m, const fs::path& p) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    char bytes[8];
    if (!in.read(bytes, 8)) io_fail(p, "truncated tensor data");
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    m.data()[i] = std::bit_cast<double>(to_little(bits));  // swap is its own inverse
  }
}

}  // namespace

void write_checkpoint(const TrainResult& result, const fs::path& path) {
  const auto params = result.encoder.parameters();
  const char* names[] = {"w1", "b1", "w2", "b2"};
  json tensors = json::array();
  for (std::size_t k = 0; k < params.size(); ++k) {
    tensors.push_back({{"name", names[k]}, {"shape", {params[k]->rows(), params[k]->cols()}}});
  }
  tensors.push_back({{"name", "class_weights"},
                     {"shape", {result.weights.weights.rows(), result.weights.weights.cols()}}});
  const json head = {{"format", kFormat},
                     {"version", 1},
                     {"dtype", "float64"},
                     {"byte_order", "little"},
                     {"train", header_json(result.header)},
                     {"tensors", tensors}};

  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  out << head.dump() << '\n';
  for (const Matrix* m : params) put(out, *m);
  put(out, result.weights.weights);
  out.close();
  if (!out) io_fail(path, "write failed");
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::string line;
  if (!std::getline(in, line)) io_fail(path, "missing header");

  Checkpoint ck;
  std::vector<Matrix*> slots{&ck.encoder.w1, &ck.encoder.b1, &ck.encoder.w2, &ck.encoder.b2,
                             &ck.weights.weights};
  try {
    const json head = json::parse(line);
    if (head.at("format") != kFormat) io_fail(path, "not a checkpoint");
    if (head.at("dtype") != "float64" || head.at("byte_order") != "little") {
      io_fail(path, "unsupported tensor encoding");
    }
    ck.header = header_from(head.at("train"));
    const json& tensors = head.at("tensors");
    if (tensors.size() != slots.size()) io_fail(path, "expected 5 tensors");
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const auto shape = tensors[k].at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1) io_fail(path, "bad tensor shape");
      slots[k]->resize(shape[0], shape[1]);
    }
  } catch (const json::exception& e) {
    io_fail(path, std::string("malformed header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::Io) throw;
    io_fail(path, e.what());
  }
  for (Matrix* m : slots) get(in, *m, path);
  if (in.peek() != std::char_traits<char>::eof()) io_fail(path, "trailing bytes after tensors");

  const Encoder& e = ck.encoder;
  if (e.b1.rows() != 1 || e.b1.cols() != e.w1.rows() || e.w2.cols() != e.w1.rows() ||
      e.b2.rows() != 1 || e.b2.cols() != e.w2.rows() || ck.weights.dim() != e.w2.rows()) {
    io_fail(path, "tensor shapes are inconsistent");
  }
  return ck;
}

std::string metrics_header_line(const TrainHeader& header) {
  json j = {{"type", "header"}};
  j.update(header_json(header));
  return j.dump();
}

std::string epoch_line(const EpochLog& log) {
  json j;
  j["epoch"] = log.epoch;
  j["lr"] = log.lr;
  j["mean_loss"] = log.mean_loss;
  for (std::size_t k = 0; k < log.accuracies.size(); ++k) {
    j["q" + std::to_string(k + 1)] = log.accuracies[k];
  }
  j["wall_ms"] = log.wall_ms;
  return j.dump();
}

void write_metrics(const TrainResult& result, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  out << metrics_header_line(result.header) << '\n';
  for (const EpochLog& e : result.log) out << epoch_line(e) << '\n';
  out.close();
  if (!out) io_fail(path, "write failed");
}

}  // namespace mixface
