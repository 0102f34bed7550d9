use lobliq::model::ModelParams;
fn main() {
    let p = lobliq::presets::yhoo_no_latency();
    let text = p.to_json();
    let back = ModelParams::from_json(&text).unwrap();
    // find first difference
    let a = format!("{:?}", p);
    let b = format!("{:?}", back);
    if a == b { println!("debug-identical (PartialEq issue is elsewhere)"); }
    for (i, (ca, cb)) in a.chars().zip(b.chars()).enumerate() {
        if ca != cb {
            println!("first diff at {}:", i);
            println!("  a: ...{}", &a[i.saturating_sub(60)..(i+60).min(a.len())]);
            println!("  b: ...{}", &b[i.saturating_sub(60)..(i+60).min(b.len())]);
            break;
        }
    }
    println!("eq: {}", p == back);
}
