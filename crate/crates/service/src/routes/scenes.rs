//! Scene CRUD and manipulations. Every mutation runs under the scene's lock,
//! is applied to a copy, validated, persisted, and only then committed.

use std::collections::{BTreeMap, BTreeSet};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sparsescene::geometry::Point;
use sparsescene::scene::{resolve_roles, SceneDoc, DEFAULT_CONTAINMENT};
use sparsescene::stylekit::{sample_styles, SampleReport, Strategy};
use sparsescene::{Instance, InstanceId, InstanceMask, Role, SceneGraph};

use crate::error::{parse_json, ApiError, ApiResult};
use crate::state::{AppState, SceneEntry};

fn doc(state: &AppState, scene: &SceneGraph) -> ApiResult<SceneDoc> {
    Ok(scene.to_doc(&state.vocab.classes, &state.vocab.attributes)?)
}

fn decode(state: &AppState, doc: &SceneDoc) -> ApiResult<SceneGraph> {
    Ok(SceneGraph::from_doc(doc, &state.vocab.classes, &state.vocab.attributes)?)
}

fn check_revision(entry: &SceneEntry, expected: Option<u64>) -> ApiResult<()> {
    match expected {
        Some(r) if r != entry.revision => Err(ApiError::conflict(
            "stale_revision",
            format!("revision {r} is stale; current is {}", entry.revision),
        )),
        _ => Ok(()),
    }
}

pub async fn list(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let mut out = Vec::new();
    for (id, entry) in state.scene_ids() {
        let e = entry.lock().await;
        out.push(json!({
            "id": id,
            "revision": e.revision,
            "width": e.scene.width,
            "height": e.scene.height,
            "instances": e.scene.len(),
        }));
    }
    Ok(Json(json!({ "scenes": out })))
}

pub async fn create(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let d: SceneDoc = parse_json(&body)?;
    let scene = decode(&state, &d)?;
    let id = state.insert_scene(scene)?;
    Ok((StatusCode::CREATED, Json(json!({"id": id, "revision": 1}))).into_response())
}

pub async fn get(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let entry = state.scene(&id)?;
    let e = entry.lock().await;
    Ok(Json(json!({
        "id": id.parse::<u64>().unwrap_or_default(),
        "revision": e.revision,
        "scene": doc(&state, &e.scene)?,
    })))
}

/// Canonical scene bytes, identical to the command-line tools' output.
pub async fn export(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = state.scene(&id)?;
    let e = entry.lock().await;
    let bytes = e.scene.to_json(&state.vocab.classes, &state.vocab.attributes)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

#[derive(Deserialize)]
struct UpdateBody {
    revision: u64,
    scene: SceneDoc,
}

pub async fn update(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: UpdateBody = parse_json(&body)?;
    let entry = state.scene(&id)?;
    let mut e = entry.lock().await;
    check_revision(&e, Some(req.revision))?;
    let scene = decode(&state, &req.scene)?;
    let mut next = e.clone();
    next.revision += 1;
    if !scene.frozen_background {
        next.frozen_snapshot = None;
    } else if next.frozen_snapshot.is_none() {
        next.frozen_snapshot = Some(scene.clone());
    }
    next.scene = scene;
    commit(&state, &id, &mut e, next)?;
    Ok(Json(json!({"revision": e.revision})))
}

fn commit(state: &AppState, id: &str, e: &mut SceneEntry, next: SceneEntry) -> ApiResult<()> {
    next.scene.validate_with(&state.vocab.classes, &state.vocab.attributes)?;
    state.persist(id.parse().expect("id was resolved"), &next)?;
    *e = next;
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Move {
        instance: InstanceId,
        dx: f64,
        dy: f64,
    },
    Scale {
        instance: InstanceId,
        factor: f64,
        pivot: Point,
    },
    Delete {
        instance: InstanceId,
        #[serde(default = "yes")]
        cascade: bool,
    },
    Duplicate {
        instance: InstanceId,
        #[serde(default)]
        offset: (f64, f64),
    },
    Attributes {
        instance: InstanceId,
        attributes: Vec<String>,
    },
    Freeze {
        frozen: bool,
    },
    /// A sketched polygon. The hierarchy is rebuilt afterwards.
    Add {
        class: String,
        rings: Vec<Vec<Point>>,
        #[serde(default)]
        attributes: Vec<String>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
struct ManipulateBody {
    #[serde(default)]
    revision: Option<u64>,
    #[serde(flatten)]
    op: Op,
}

#[derive(Debug, Serialize)]
pub struct Changed {
    pub revision: u64,
    pub changed: Vec<InstanceId>,
}

fn attr_ids(state: &AppState, names: &[String]) -> ApiResult<BTreeSet<u16>> {
    names
        .iter()
        .map(|n| {
            state
                .vocab
                .attributes
                .lookup(n)
                .ok_or_else(|| ApiError::bad_request("invalid_scene", format!("unknown attribute `{n}`")))
        })
        .collect()
}

/// Background-role instances, compared without their child lists.
fn background(scene: &SceneGraph, state: &AppState) -> BTreeMap<InstanceId, Instance> {
    resolve_roles(scene, &state.vocab.classes)
        .into_iter()
        .filter(|(_, r)| *r == Role::Background)
        .filter_map(|(id, _)| scene.instances.get(&id).cloned())
        .map(|mut i| {
            i.children.clear();
            (i.id, i)
        })
        .collect()
}

/// Apply `op` to `scene` in place and return the changed ids.
pub fn apply(state: &AppState, scene: &mut SceneGraph, op: &Op) -> ApiResult<Vec<InstanceId>> {
    let changed = match op {
        Op::Move { instance, dx, dy } => scene.move_instance(*instance, *dx, *dy)?,
        Op::Scale { instance, factor, pivot } => scene.scale_instance(*instance, *factor, *pivot)?,
        Op::Delete { instance, cascade } => scene.delete_instance(*instance, *cascade)?,
        Op::Duplicate { instance, offset } => scene.duplicate_instance(*instance, *offset)?.1,
        Op::Attributes { instance, attributes } => {
            let ids = attr_ids(state, attributes)?;
            scene.set_attributes(*instance, ids, &state.vocab.attributes)?;
            vec![*instance]
        }
        Op::Freeze { frozen } => {
            scene.frozen_background = *frozen;
            vec![]
        }
        Op::Add { class, rings, attributes } => {
            let class_id = state
                .vocab
                .classes
                .lookup(class)
                .ok_or_else(|| ApiError::bad_request("invalid_scene", format!("unknown class `{class}`")))?;
            let id = scene.next_id();
            let inst = Instance::new(id, class_id, InstanceMask::new(rings.clone()))
                .with_attributes(attr_ids(state, attributes)?);
            let before: BTreeMap<_, _> = scene.instances.iter().map(|(k, v)| (*k, v.parent)).collect();
            scene.instances.insert(id, inst);
            scene.validate()?;
            scene.rebuild_hierarchy(DEFAULT_CONTAINMENT);
            let mut changed = vec![id];
            changed.extend(
                before
                    .iter()
                    .filter(|(k, p)| scene.instances.get(k).map(|i| i.parent) != Some(**p))
                    .map(|(k, _)| *k),
            );
            changed
        }
    };
    Ok(changed)
}

pub async fn manipulate(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Changed>> {
    let req: ManipulateBody = parse_json(&body)?;
    let entry = state.scene(&id)?;
    let mut e = entry.lock().await;
    check_revision(&e, req.revision)?;
    let mut next = e.clone();
    let changed = apply(&state, &mut next.scene, &req.op)?;
    match req.op {
        Op::Freeze { frozen: true } if next.frozen_snapshot.is_none() => {
            next.frozen_snapshot = Some(e.scene.clone());
        }
        Op::Freeze { frozen: false } => next.frozen_snapshot = None,
        _ if e.scene.frozen_background && background(&e.scene, &state) != background(&next.scene, &state) => {
            return Err(ApiError::conflict(
                "background_frozen",
                "the background is frozen; this edit would change background instances",
            ));
        }
        _ => {}
    }
    next.revision += 1;
    commit(&state, &id, &mut e, next)?;
    Ok(Json(Changed {
        revision: e.revision,
        changed,
    }))
}

#[derive(Deserialize)]
struct RandomizeBody {
    strategy: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    revision: Option<u64>,
}

pub async fn randomize(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: RandomizeBody = parse_json(&body)?;
    let strategy: Strategy = req.strategy.parse()?;
    let dist = state
        .dist
        .read()
        .expect("distribution lock")
        .clone()
        .ok_or_else(|| ApiError::bad_request("no_distribution", "no style distribution is loaded"))?;
    let entry = state.scene(&id)?;
    let mut e = entry.lock().await;
    check_revision(&e, req.revision)?;
    let (scene, report): (SceneGraph, SampleReport) =
        sample_styles(&e.scene, &dist, strategy, req.seed, &state.vocab.classes);
    let changed: Vec<InstanceId> = scene
        .instances
        .values()
        .filter(|i| e.scene.instances.get(&i.id).map(|o| &o.attributes) != Some(&i.attributes))
        .map(|i| i.id)
        .collect();
    let mut next = e.clone();
    next.scene = scene;
    next.revision += 1;
    commit(&state, &id, &mut e, next)?;
    Ok(Json(json!({"revision": e.revision, "changed": changed, "report": report})))
}
