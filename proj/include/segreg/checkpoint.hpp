#pragma once

#include <string>
#include <utility>

#include "segreg/nets.hpp"

namespace segreg {

// Versioned binary model container: magic string, JSON config record, then
// the parameter arrays in declaration order as little-endian 64-bit floats.
// Batch-norm running moments follow the parameters in the same encoding.

void save_unet(const std::string& path, UNet& net);
UNet load_unet(const std::string& path);

void save_autoencoder(const std::string& path, ShapeEncoder& encoder, ShapeDecoder& decoder);
std::pair<ShapeEncoder, ShapeDecoder> load_autoencoder(const std::string& path);

void save_discriminator(const std::string& path, Discriminator& net);
Discriminator load_discriminator(const std::string& path);

// Kind tag of a checkpoint file ("unet", "autoencoder", "discriminator").
std::string checkpoint_kind(const std::string& path);

}  // namespace segreg
