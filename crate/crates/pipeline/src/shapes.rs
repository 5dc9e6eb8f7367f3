//! Per-mesh precomputation through the cache: frames, `L` anisotropic
//! operators and their eigenbases, patch operators, and the isotropic basis
//! used for descriptors and refinement.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use acnn::laplacian::{
    cotangent_stiffness, decode_operator, encode_operator, mass_matrix, stiffness_matrix, AnisoParams,
};
use acnn::mesh::{build_edge_topology, compute_triangle_frames_with_tolerance, load_mesh, EdgeTopology};
use acnn::patch::{build_patch_operators, decode_patch_operators, encode_patch_operators};
use acnn::spectral::{decode_basis, encode_basis, generalized_eig_with, hks, hks_time_grid, wks, wks_energy_grid, EigenOptions, HeatKernelSet};
use acnn::{Basis, Frame, Mesh, Operator, PatchOperators};

use crate::cache::{decode_frames, encode_frames, Cache, KeyBuilder};
use crate::config::{DescriptorKind, PipelineConfig};
use crate::descriptors::{read_matrix, Standardization};
use crate::error::user;

/// A loaded, validated, unit-area mesh.
#[derive(Debug, Clone)]
pub struct Shape {
    pub path: PathBuf,
    pub mesh: Mesh,
    pub hash: [u8; 32],
    pub topology: EdgeTopology,
    pub mass: DVector<f64>,
}

impl Shape {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(user(format!("mesh {} does not exist", path.display())));
        }
        let mesh: Mesh = load_mesh(path).with_context(|| format!("loading mesh {}", path.display()))?;
        Ok(Self::from_mesh(path, mesh))
    }

    pub fn from_mesh(path: &Path, mesh: Mesh) -> Self {
        Self {
            path: path.to_path_buf(),
            hash: mesh.content_hash(),
            topology: build_edge_topology(&mesh),
            mass: mass_matrix(&mesh),
            mesh,
        }
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash)
    }

    pub fn stem(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "shape".into())
    }
}

pub struct Precompute<'a> {
    pub config: &'a PipelineConfig,
    pub cache: &'a Cache,
}

impl<'a> Precompute<'a> {
    pub fn new(config: &'a PipelineConfig, cache: &'a Cache) -> Self {
        Self { config, cache }
    }

    fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            dense_limit: self.config.operators.dense_limit,
            residual_tolerance: self.config.operators.residual_tolerance,
        }
    }

    fn basis_size(&self, shape: &Shape) -> usize {
        self.config.operators.eigen_count.min(shape.n())
    }

    fn frames_key(&self, shape: &Shape) -> String {
        KeyBuilder::new("frames")
            .bytes(&shape.hash)
            .f64(self.config.operators.umbilic_tolerance)
            .finish()
    }

    fn operator_key(&self, shape: &Shape, l: usize) -> String {
        let op = &self.config.operators;
        KeyBuilder::new("operators")
            .bytes(self.frames_key(shape).as_bytes())
            .f64(op.alpha)
            .u64(op.orientations as u64)
            .u64(l as u64)
            .finish()
    }

    fn basis_key(&self, shape: &Shape, l: usize) -> String {
        let opts = self.eigen_options();
        KeyBuilder::new("bases")
            .bytes(self.operator_key(shape, l).as_bytes())
            .u64(self.basis_size(shape) as u64)
            .u64(opts.dense_limit as u64)
            .f64(opts.residual_tolerance)
            .finish()
    }

    fn patches_key(&self, shape: &Shape) -> String {
        let op = &self.config.operators;
        let mut k = KeyBuilder::new("patches");
        for l in 0..op.orientations {
            k.bytes(self.basis_key(shape, l).as_bytes());
        }
        for &t in &op.scales {
            k.f64(t);
        }
        k.f64(op.patch_eps).finish()
    }

    fn descriptor_basis_key(&self, shape: &Shape) -> String {
        let opts = self.eigen_options();
        KeyBuilder::new("descriptor_bases")
            .bytes(&shape.hash)
            .u64(self.basis_size(shape) as u64)
            .u64(opts.dense_limit as u64)
            .f64(opts.residual_tolerance)
            .finish()
    }

    pub fn frames(&self, shape: &Shape) -> Result<Vec<Frame>> {
        let tol = self.config.operators.umbilic_tolerance;
        self.cache.get_or_build(
            "frames",
            &self.frames_key(shape),
            |b| {
                let f = decode_frames(b)?;
                if f.len() != shape.mesh.faces().len() {
                    return Err(acnn::Error::Format("frame count does not match the mesh".into()));
                }
                Ok(f)
            },
            |f| encode_frames(f),
            || Ok(compute_triangle_frames_with_tolerance(&shape.mesh, tol)),
        )
    }

    pub fn operator(&self, shape: &Shape, frames: &[Frame], l: usize) -> Result<Operator> {
        let op = &self.config.operators;
        self.cache.get_or_build(
            "operators",
            &self.operator_key(shape, l),
            |b| {
                let o: Operator = decode_operator(b)?;
                if o.n() != shape.n() {
                    return Err(acnn::Error::Format("operator size does not match the mesh".into()));
                }
                Ok(o)
            },
            encode_operator,
            || {
                let params = AnisoParams::orientation(op.alpha, l, op.orientations)?;
                Ok(stiffness_matrix(&shape.mesh, &shape.topology, frames, params)?)
            },
        )
    }

    /// Eigenbases of all `L` orientations, solved in parallel when missing.
    pub fn bases(&self, shape: &Shape) -> Result<Vec<Basis>> {
        let frames: OnceLock<Vec<Frame>> = OnceLock::new();
        let k = self.basis_size(shape);
        let opts = self.eigen_options();
        (0..self.config.operators.orientations)
            .into_par_iter()
            .map(|l| {
                self.cache.get_or_build(
                    "bases",
                    &self.basis_key(shape, l),
                    |b| decode_basis(b, &shape.hash, &shape.mass),
                    |b| encode_basis(b, &shape.hash),
                    || {
                        let f = match frames.get() {
                            Some(f) => f,
                            None => {
                                let built = self.frames(shape)?;
                                frames.get_or_init(|| built)
                            }
                        };
                        let op = self.operator(shape, f, l)?;
                        generalized_eig_with(&op, k, &opts)
                            .with_context(|| format!("{}: eigenbasis for orientation {l}", shape.path.display()))
                    },
                )
            })
            .collect()
    }

    pub fn patches(&self, shape: &Shape) -> Result<PatchOperators> {
        let op = &self.config.operators;
        self.cache.get_or_build(
            "patches",
            &self.patches_key(shape),
            |b| {
                let p: PatchOperators = decode_patch_operators(b)?;
                if p.n() != shape.n() || p.orientations() != op.orientations || p.scales() != op.scales.len() {
                    return Err(acnn::Error::Format("patch operators do not match the settings".into()));
                }
                Ok(p)
            },
            encode_patch_operators,
            || {
                let kernels = HeatKernelSet::new(self.bases(shape)?, op.scales.clone())?;
                build_patch_operators(&kernels, &shape.mass, op.patch_eps)
                    .with_context(|| format!("{}: patch operators", shape.path.display()))
            },
        )
    }

    /// Isotropic basis used for HKS/WKS and functional-map refinement.
    pub fn descriptor_basis(&self, shape: &Shape) -> Result<Basis> {
        let k = self.basis_size(shape);
        let opts = self.eigen_options();
        self.cache.get_or_build(
            "descriptor_bases",
            &self.descriptor_basis_key(shape),
            |b| decode_basis(b, &shape.hash, &shape.mass),
            |b| encode_basis(b, &shape.hash),
            || {
                let op = Operator {
                    stiffness: cotangent_stiffness(&shape.mesh, &shape.topology)?,
                    mass: shape.mass.clone(),
                    params: AnisoParams::isotropic(),
                };
                generalized_eig_with(&op, k, &opts)
                    .with_context(|| format!("{}: isotropic eigenbasis", shape.path.display()))
            },
        )
    }

    /// Everything `train` and `infer` need for one mesh.
    pub fn precompute(&self, shape: &Shape, with_patches: bool) -> Result<()> {
        if with_patches {
            self.bases(shape)?;
            self.patches(shape)?;
        }
        if self.config.descriptors.kind != DescriptorKind::File {
            self.descriptor_basis(shape)?;
        }
        Ok(())
    }
}

/// How raw descriptors are computed; fixed at training time from the
/// reference shape so that every mesh uses the same times or energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureGrid {
    Hks { times: Vec<f64> },
    Wks { energies: Vec<f64>, variance: f64 },
    File { extension: String },
}

impl FeatureGrid {
    pub fn from_reference(pre: &Precompute<'_>, reference: &Shape) -> Result<Self> {
        let d = &pre.config.descriptors;
        Ok(match d.kind {
            DescriptorKind::Hks if !d.times.is_empty() => FeatureGrid::Hks { times: d.times.clone() },
            DescriptorKind::Hks => FeatureGrid::Hks {
                times: hks_time_grid(&pre.descriptor_basis(reference)?, d.count),
            },
            DescriptorKind::Wks => {
                let (energies, variance) = wks_energy_grid(&pre.descriptor_basis(reference)?, d.count);
                FeatureGrid::Wks { energies, variance }
            }
            DescriptorKind::File => FeatureGrid::File {
                extension: d.extension.clone(),
            },
        })
    }

    pub fn compute(&self, pre: &Precompute<'_>, shape: &Shape) -> Result<DMatrix<f64>> {
        let m = match self {
            FeatureGrid::Hks { times } => hks(&pre.descriptor_basis(shape)?, times),
            FeatureGrid::Wks { energies, variance } => wks(&pre.descriptor_basis(shape)?, energies, *variance),
            FeatureGrid::File { extension } => {
                let path = shape.path.with_extension(extension);
                let m = read_matrix(&path)?;
                if m.nrows() != shape.n() {
                    return Err(user(format!(
                        "{} has {} rows for a {}-vertex mesh",
                        path.display(),
                        m.nrows(),
                        shape.n()
                    )));
                }
                m
            }
        };
        if m.ncols() == 0 {
            return Err(user(format!("no descriptors for {}", shape.path.display())));
        }
        Ok(m)
    }
}

/// Descriptor recipe and standardization persisted next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub grid: FeatureGrid,
    pub standardization: Standardization,
}

impl FeatureModel {
    pub fn features(&self, pre: &Precompute<'_>, shape: &Shape) -> Result<DMatrix<f64>> {
        self.standardization.apply(&self.grid.compute(pre, shape)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))
    }
}
