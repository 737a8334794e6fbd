//! Writes the procedural test surfaces as OBJ files.
//!
//! `cargo run --release -p neurcross --example make_shapes -- <dir>`

use std::path::PathBuf;

use neurcross::mesh::TriMesh;
use neurcross::obj::write_obj;
use neurcross::shapes;

fn save(dir: &std::path::Path, name: &str, m: &TriMesh) -> neurcross::Result<()> {
    write_obj(dir.join(name), m.vertices(), m.faces())?;
    println!("{name}: {} faces", m.face_count());
    Ok(())
}

fn main() -> neurcross::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "shapes".into()));
    std::fs::create_dir_all(&dir).map_err(|e| neurcross::Error::Io { path: dir.clone(), source: e })?;
    save(&dir, "sphere.obj", &shapes::icosphere(3, 0.4))?;
    save(&dir, "bumpy_sphere.obj", &shapes::bumpy_sphere(3, 0.4, 0.02))?;
    save(&dir, "torus.obj", &shapes::uv_torus(0.35, 0.15, 64, 32))?;
    save(&dir, "cylinder.obj", &shapes::open_cylinder(0.2, 0.8, 48, 24))?;
    save(&dir, "ellipsoid.obj", &shapes::ellipsoid(3, 0.5, 0.35, 0.2))?;
    save(&dir, "genus2.obj", &shapes::genus2_slab(2))?;
    save(&dir, "box.obj", &shapes::box_mesh([-0.5; 3], [0.5; 3]))?;
    let (v, q) = shapes::grid_quads(8, 8, 0.125);
    write_obj(dir.join("grid_quads.obj"), &v, &q)?;
    save(&dir, "grid_tris.obj", &shapes::flat_grid(8, 8, 0.125))?;
    Ok(())
}
