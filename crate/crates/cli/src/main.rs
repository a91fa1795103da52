fn main() {
    println!("bloomgs");
}
