#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "hepml/common.hpp"
#include "hepml/pipeline.hpp"
#include "hepml/record_file.hpp"

using namespace hepml;

namespace {

Example tagged_example(int tag) {
  Example e;
  e.label[tag % kNumClasses] = 1.0f;
  e.hlf[0] = float(tag);
  e.llf.assign(size_t(kLlfRows) * kLlfCols, 0.0f);
  e.llf[0] = float(tag);
  return e;
}

/// Writes n tagged examples round-robin over `files` shards under dir.
std::vector<std::string> write_dataset(const std::string& dir, int n,
                                       int files) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  std::vector<std::unique_ptr<RecordWriter>> writers;
  for (int f = 0; f < files; ++f) {
    paths.push_back(dir + "/part" + std::to_string(f) + ".rec");
    writers.push_back(std::make_unique<RecordWriter>(paths.back()));
  }
  for (int i = 0; i < n; ++i) writers[i % files]->write(tagged_example(i));
  for (auto& w : writers) w->close();
  return paths;
}

std::vector<int> epoch_tags(Pipeline& pipe, int epoch) {
  std::vector<int> tags;
  pipe.begin_epoch(epoch);
  while (auto batch = pipe.next_batch())
    for (const auto& e : *batch) tags.push_back(int(e.hlf[0]));
  return tags;
}

}  // namespace

TEST_CASE("a unit shuffle buffer preserves the input order") {
  auto files = write_dataset("/tmp/hepml_pipe_a", 50, 1);
  PipeConfig pc;
  pc.files = files;
  pc.shuffle_buffer = 1;
  pc.batch_size = 7;
  pc.prefetch_depth = 0;
  Pipeline pipe(pc);
  auto tags = epoch_tags(pipe, 0);
  REQUIRE(tags.size() == 50);
  for (int i = 0; i < 50; ++i) CHECK(tags[i] == i);
}

TEST_CASE("1000 records at batch 128 give 7 full batches plus 104") {
  auto files = write_dataset("/tmp/hepml_pipe_b", 1000, 4);
  PipeConfig pc;
  pc.files = files;
  pc.batch_size = 128;
  pc.shuffle_buffer = 32;
  pc.seed = 5;
  Pipeline pipe(pc);
  pipe.begin_epoch(0);
  std::vector<size_t> sizes;
  while (auto batch = pipe.next_batch()) sizes.push_back(batch->size());
  REQUIRE(sizes.size() == 8);
  for (int i = 0; i < 7; ++i) CHECK(sizes[i] == 128);
  CHECK(sizes[7] == 104);
}

TEST_CASE("every epoch visits each record exactly once") {
  const int n = 219;
  auto files = write_dataset("/tmp/hepml_pipe_c", n, 5);
  for (int width : {1, 2, 5}) {
    for (size_t buffer : {size_t(1), size_t(8), size_t(64)}) {
      for (int prefetch : {0, 4}) {
        PipeConfig pc;
        pc.files = files;
        pc.interleave_width = width;
        pc.shuffle_buffer = buffer;
        pc.batch_size = 16;
        pc.prefetch_depth = prefetch;
        pc.seed = 11;
        Pipeline pipe(pc);
        auto tags = epoch_tags(pipe, 0);
        std::sort(tags.begin(), tags.end());
        REQUIRE(int(tags.size()) == n);
        for (int i = 0; i < n; ++i) CHECK(tags[i] == i);
      }
    }
  }
}

TEST_CASE("prefetch changes timing only, never content") {
  auto files = write_dataset("/tmp/hepml_pipe_d", 300, 3);
  auto run = [&](int depth) {
    PipeConfig pc;
    pc.files = files;
    pc.interleave_width = 2;
    pc.shuffle_buffer = 17;
    pc.batch_size = 32;
    pc.prefetch_depth = depth;
    pc.seed = 21;
    Pipeline pipe(pc);
    return epoch_tags(pipe, 0);
  };
  CHECK(run(0) == run(4));
}

TEST_CASE("fixed config and seed give identical batch sequences") {
  auto files = write_dataset("/tmp/hepml_pipe_e", 200, 2);
  PipeConfig pc;
  pc.files = files;
  pc.shuffle_buffer = 64;
  pc.batch_size = 16;
  pc.seed = 9;
  Pipeline a(pc), b(pc);
  CHECK(epoch_tags(a, 0) == epoch_tags(b, 0));
}

TEST_CASE("cache serves later epochs with an identical multiset") {
  auto files = write_dataset("/tmp/hepml_pipe_f", 150, 3);
  PipeConfig pc;
  pc.files = files;
  pc.cache = true;
  pc.shuffle_buffer = 13;
  pc.batch_size = 20;
  pc.seed = 3;
  Pipeline pipe(pc);
  auto e0 = epoch_tags(pipe, 0);
  CHECK(pipe.epoch_stats().bytes_read > 0);
  auto e1 = epoch_tags(pipe, 1);
  CHECK(pipe.epoch_stats().bytes_read == 0);  // served from memory
  // same seed, same shuffle: identical sequences
  CHECK(e0 == e1);
  auto sorted0 = e0;
  std::sort(sorted0.begin(), sorted0.end());
  for (int i = 0; i < 150; ++i) CHECK(sorted0[i] == i);
}

TEST_CASE("reshuffle per epoch permutes between epochs only when enabled") {
  auto files = write_dataset("/tmp/hepml_pipe_g", 200, 2);
  PipeConfig pc;
  pc.files = files;
  pc.shuffle_buffer = 200;
  pc.batch_size = 32;
  pc.seed = 4;

  pc.reshuffle_each_epoch = false;
  Pipeline stable(pc);
  CHECK(epoch_tags(stable, 0) == epoch_tags(stable, 1));

  pc.reshuffle_each_epoch = true;
  Pipeline moving(pc);
  auto a = epoch_tags(moving, 0);
  auto b = epoch_tags(moving, 1);
  CHECK(a != b);
  auto sa = a, sb = b;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  CHECK(sa == sb);  // permutation only
}

TEST_CASE("corrupt records report file and offset") {
  auto files = write_dataset("/tmp/hepml_pipe_h", 10, 1);
  // Flip one payload byte of the third record.
  {
    std::fstream f(files[0],
                   std::ios::in | std::ios::out | std::ios::binary);
    size_t frame = kRecordFrameOverhead + kExamplePayloadBytes;
    f.seekp(std::streamoff(2 * frame + 12 + 100));
    char b;
    f.seekg(std::streamoff(2 * frame + 12 + 100));
    f.get(b);
    f.seekp(std::streamoff(2 * frame + 12 + 100));
    f.put(char(b ^ 0x40));
  }
  PipeConfig pc;
  pc.files = files;
  pc.batch_size = 4;
  Pipeline pipe(pc);
  pipe.begin_epoch(0);
  try {
    while (pipe.next_batch()) {
    }
    FAIL("expected corrupt record error");
  } catch (const FormatError& err) {
    std::string what = err.what();
    CHECK(what.find(files[0]) != std::string::npos);
    CHECK(what.find("@") != std::string::npos);
  }
}

TEST_CASE("missing files fail before the first batch") {
  PipeConfig pc;
  pc.files = {"/tmp/hepml_no_such_file.rec"};
  CHECK_THROWS_AS(Pipeline{pc}, IoError);
}

TEST_CASE("config validation") {
  PipeConfig pc;
  pc.files = write_dataset("/tmp/hepml_pipe_i", 5, 1);
  pc.batch_size = 0;
  CHECK_THROWS_AS(Pipeline{pc}, ConfigError);
  pc.batch_size = 4;
  pc.shuffle_buffer = 0;
  CHECK_THROWS_AS(Pipeline{pc}, ConfigError);
  pc.shuffle_buffer = 1;
  pc.files.clear();
  CHECK_THROWS_AS(Pipeline{pc}, ConfigError);
}

TEST_CASE("throughput counters accumulate per epoch") {
  auto files = write_dataset("/tmp/hepml_pipe_j", 64, 2);
  PipeConfig pc;
  pc.files = files;
  pc.batch_size = 16;
  Pipeline pipe(pc);
  pipe.begin_epoch(0);
  uint64_t examples = 0;
  while (auto batch = pipe.next_batch()) examples += batch->size();
  CHECK(pipe.epoch_stats().examples == examples);
  CHECK(pipe.epoch_stats().bytes_read ==
        64 * (kExamplePayloadBytes + kRecordFrameOverhead));
}
