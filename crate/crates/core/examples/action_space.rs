//! Prints the 11 x 15 aim grid and round-trips a key combination.

use raybot::actions::{angles_to_aim_index, AimAction, Key, KeyAction, AIM_CENTER, AIM_CHOICES, PITCH_ACTION_ANGLES, YAW_ANGLES};

fn main() {
    println!("{AIM_CHOICES} aim choices; centre index {}", AIM_CENTER.index());
    print!("{:>6}", "");
    for y in YAW_ANGLES {
        print!("{y:>5}");
    }
    println!();
    for (r, p) in PITCH_ACTION_ANGLES.iter().enumerate() {
        print!("{p:>6}");
        for c in 0..YAW_ANGLES.len() {
            print!("{:>5}", r * YAW_ANGLES.len() + c);
        }
        println!();
    }

    let aim = angles_to_aim_index(-4.0, 12.0);
    println!("a (-4°, 12°) turn snaps to index {} = {:?}", aim.index(), aim.angles());
    assert_eq!(AimAction::new(aim.index()).unwrap(), aim);

    let keys = KeyAction::from_keys(&[Key::W, Key::Space, Key::LeftClick]);
    let names: Vec<_> = Key::ALL.iter().filter(|k| keys.is_down(**k)).map(|k| k.name()).collect();
    println!("keys {names:?} pack to bits {:#013b}", keys.bits());
}
