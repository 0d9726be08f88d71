//! Named reference chains and model manifests.

use crate::chain::{parse_chain, ChainSpec};
use crate::manifest::{parse_manifest, ModelManifest};

pub const LENET_MANIFEST: &str = include_str!("../fixtures/lenet.manifest");
pub const VGG16_BN_MANIFEST: &str = include_str!("../fixtures/vgg16_bn.manifest");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixture {
    pub name: &'static str,
    pub group: &'static str,
    pub text: &'static str,
}

impl Fixture {
    pub fn spec(&self) -> ChainSpec {
        parse_chain(self.text).expect("fixture chains parse")
    }
}

const BUTTERFLY_16: &str = "16 <-(2,2,8)- 16 <-(2,2,4)- 16 <-(2,2,2)- 16 <-(2,2,1)- 16";
const LENET_FC1: &str = "128 <-(2,2,64)- 128 <-(2,2,32)- 128 <-(1,2,32)- 256 <-(2,2,16)- 256 <-(16,25,1)- 400";
const LENET_FC2: &str = "64 <-(2,2,32)- 64 <-(2,2,16)- 64 <-(2,2,8)- 64 <-(2,2,4)- 64 <-(2,2,2)- 64 <-(2,4,1)- 128";
const LENET_CONV2_A: &str = "16 <-(2,2,8)- 16 <-(2,6,4)- 48 <-(1,2,4)- 96 <-(4,3,1)- 72";
const LENET_CONV2_B: &str = "16 <-(2,6,8)- 48 <-(1,2,8)- 96 <-(2,2,4)- 96 <-(4,3,1)- 72";
const VGG_CONV13: &str = "512 <-(2,4,256)- 1024 <-(2,4,128)- 2048 <-(2,4,64)- 4096 <-(2,2,32)- 4096 <-(2,2,16)- 4096 <-(2,2,8)- 4096 <-(8,9,1)- 4608";
const VGG_CONV8: &str = "512 <-(2,2,256)- 512 <-(2,4,128)- 1024 <-(2,4,64)- 2048 <-(2,2,32)- 2048 <-(2,2,16)- 2048 <-(2,2,8)- 2048 <-(8,9,1)- 2304";
const WIDE_BULGE_4608: &str = "512 <-(2,4,256)- 1024 <-(2,4,128)- 2048 <-(2,4,64)- 4096 <-(2,4,32)- 8192 <-(2,2,16)- 8192 <-(16,9,1)- 4608";
const SHRINK_2048_512: &str = "2048 <-(2,2,1024)- 2048 <-(2,2,512)- 2048 <-(4,2,128)- 1024 <-(2,2,64)- 1024 <-(2,2,32)- 1024 <-(2,2,16)- 1024 <-(2,2,8)- 1024 <-(2,2,4)- 1024 <-(4,2,1)- 512";

const fn fx(name: &'static str, group: &'static str, text: &'static str) -> Fixture {
    Fixture { name, group, text }
}

pub const FIXTURES: &[Fixture] = &[
    fx("butterfly16", "butterfly", BUTTERFLY_16),
    fx("lenet_fc1", "lenet", LENET_FC1),
    fx("lenet_fc2", "lenet", LENET_FC2),
    fx("lenet_conv2_a", "lenet", LENET_CONV2_A),
    fx("lenet_conv2_b", "lenet", LENET_CONV2_B),
    fx("vgg_conv13", "vgg", VGG_CONV13),
    fx("vgg_conv8", "vgg", VGG_CONV8),
    fx("lenet_fc1_mono_1", "lenet_fc1_variants", "128 <-(2,2,64)- 128 <-(2,2,32)- 128 <-(2,2,16)- 128 <-(2,2,8)- 128 <-(8,25,1)- 400"),
    fx("lenet_fc1_mono_2", "lenet_fc1_variants", LENET_FC1),
    fx("lenet_fc1_bulge_1", "lenet_fc1_variants", "128 <-(2,4,64)- 256 <-(2,4,32)- 512 <-(4,5,8)- 640 <-(8,5,1)- 400"),
    fx("lenet_fc1_bulge_2", "lenet_fc1_variants", "128 <-(2,4,64)- 256 <-(2,4,32)- 512 <-(2,1,16)- 256 <-(16,25,1)- 400"),
    fx("lenet_fc1_bulge_3", "lenet_fc1_variants", "128 <-(2,4,64)- 256 <-(1,2,64)- 512 <-(2,2,32)- 512 <-(2,1,16)- 256 <-(16,25,1)- 400"),
    fx("lenet_conv2_mono_1", "lenet_conv2_variants", "16 <-(4,4,4)- 16 <-(2,2,2)- 16 <-(1,3,2)- 48 <-(2,3,1)- 72"),
    fx("lenet_conv2_mono_2", "lenet_conv2_variants", "16 <-(8,8,2)- 16 <-(1,3,2)- 48 <-(2,3,1)- 72"),
    fx("lenet_conv2_mono_3", "lenet_conv2_variants", "16 <-(2,3,8)- 24 <-(1,2,8)- 48 <-(2,2,4)- 48 <-(4,6,1)- 72"),
    fx("lenet_conv2_bulge_1", "lenet_conv2_variants", LENET_CONV2_A),
    fx("lenet_conv2_bulge_2", "lenet_conv2_variants", "16 <-(2,3,8)- 24 <-(1,2,8)- 48 <-(2,4,4)- 96 <-(4,3,1)- 72"),
    fx("lenet_conv2_bulge_3", "lenet_conv2_variants", LENET_CONV2_B),
    fx("vgg_conv13_mono_1", "vgg_conv13_variants", "512 <-(2,4,256)- 1024 <-(2,4,128)- 2048 <-(2,2,64)- 2048 <-(2,2,32)- 2048 <-(2,2,16)- 2048 <-(2,4,8)- 4096 <-(8,9,1)- 4608"),
    fx("vgg_conv13_mono_2", "vgg_conv13_variants", "512 <-(2,4,256)- 1024 <-(2,2,128)- 1024 <-(2,4,64)- 2048 <-(2,4,32)- 4096 <-(2,2,16)- 4096 <-(2,2,8)- 4096 <-(8,9,1)- 4608"),
    fx("vgg_conv13_mono_3", "vgg_conv13_variants", VGG_CONV13),
    fx("vgg_conv13_bulge_1", "vgg_conv13_variants", "512 <-(2,4,256)- 1024 <-(2,4,128)- 2048 <-(2,4,64)- 4096 <-(2,2,32)- 4096 <-(2,4,16)- 8192 <-(4,3,4)- 6144 <-(4,3,1)- 4608"),
    fx("vgg_conv13_bulge_2", "vgg_conv13_variants", "512 <-(2,4,256)- 1024 <-(2,4,128)- 2048 <-(2,4,64)- 4096 <-(2,4,32)- 8192 <-(2,2,16)- 8192 <-(4,3,4)- 6144 <-(4,3,1)- 4608"),
    fx("vgg_conv13_bulge_3", "vgg_conv13_variants", WIDE_BULGE_4608),
    fx("resnet_conv5_1_bulge", "resnet_bulging", "512 <-(2,2,256)- 512 <-(2,4,128)- 1024 <-(2,2,64)- 1024 <-(2,2,32)- 1024 <-(2,4,16)- 2048 <-(2,2,8)- 2048 <-(2,2,4)- 2048 <-(4,2,1)- 1024"),
    fx("resnet_conv5_2_bulge", "resnet_bulging", WIDE_BULGE_4608),
    fx("resnet_conv5_3_bulge", "resnet_bulging", SHRINK_2048_512),
    fx("resnet_conv5_4_bulge", "resnet_bulging", "512 <-(2,8,256)- 2048 <-(4,16,64)- 8192 <-(4,4,16)- 8192 <-(4,4,4)- 8192 <-(4,1,1)- 2048"),
    fx("resnet_conv5_1_mono", "resnet_monotonic", "512 <-(2,4,256)- 1024 <-(4,4,64)- 1024 <-(4,4,16)- 1024 <-(4,4,4)- 1024 <-(4,4,1)- 1024"),
    fx("resnet_conv5_2_mono", "resnet_monotonic", VGG_CONV13),
    fx("resnet_conv5_3_mono", "resnet_monotonic", SHRINK_2048_512),
    fx("resnet_conv5_4_mono", "resnet_monotonic", "512 <-(2,2,256)- 512 <-(2,4,128)- 1024 <-(4,4,32)- 1024 <-(2,4,16)- 2048 <-(4,4,4)- 2048 <-(4,4,1)- 2048"),
];

pub fn all() -> &'static [Fixture] {
    FIXTURES
}

pub fn get(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}

pub fn group(group: &str) -> impl Iterator<Item = &'static Fixture> + '_ {
    FIXTURES.iter().filter(move |f| f.group == group)
}

pub fn lenet_manifest() -> ModelManifest {
    parse_manifest(LENET_MANIFEST).expect("bundled manifest parses")
}

pub fn vgg16_bn_manifest() -> ModelManifest {
    parse_manifest(VGG16_BN_MANIFEST).expect("bundled manifest parses")
}
