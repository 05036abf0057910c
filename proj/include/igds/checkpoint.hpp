#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "igds/diffusion.hpp"
#include "igds/ndnum/tensor.hpp"
#include "igds/ve.hpp"

namespace igds::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Versioned binary container of named tensors, reals, integers and strings.
/// Values are stored little-endian; doubles keep their exact bit pattern.
struct Checkpoint {
  std::string kind;
  std::map<std::string, nd::Tensor> tensors;
  std::map<std::string, double> reals;
  std::map<std::string, std::int64_t> ints;
  std::map<std::string, std::string> strings;

  const nd::Tensor& tensor(const std::string& key) const;
  double real(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  const std::string& string(const std::string& key) const;
};

void write(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read(std::istream& in);
void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

Checkpoint from_ve(const ve::VeModel& model, const ve::ClassifierHead* head = nullptr);
ve::VeModel to_ve(const Checkpoint& ckpt);
/// Throws when the checkpoint has no head.
ve::ClassifierHead head_from(const Checkpoint& ckpt);

Checkpoint from_denoiser(const diffusion::DenoiserNet& net, const diffusion::Schedule& sched);
diffusion::DenoiserNet to_denoiser(const Checkpoint& ckpt);
diffusion::Schedule schedule_from(const Checkpoint& ckpt);

}  // namespace igds::ckpt
