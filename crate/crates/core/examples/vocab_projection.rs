//! Hard and soft projection onto a toy vocabulary, and the pull the
//! regularizer exerts on an off-vocabulary point.
//!
//!     cargo run --example vocab_projection

use gtma::{
    project_to_vocab, regularization_gradient, Mat64, ProjectionMode, Result, Vec64,
    VocabularyTable,
};

fn main() -> Result<()> {
    let vocab = VocabularyTable::new(
        Mat64::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ])?,
        ["east", "north", "west", "south"]
            .map(String::from)
            .to_vec(),
    )?;
    let soft = ProjectionMode::SoftKnn {
        k: 2,
        temperature: 0.5,
    };

    for p in [[0.9, 0.2], [0.5, 0.5], [-0.1, -2.0], [0.0, 0.0]] {
        let z = Vec64::new(p.to_vec())?;
        let hard = project_to_vocab(&z, &vocab, ProjectionMode::HardNearest)?;
        let knn = project_to_vocab(&z, &vocab, soft)?;
        let pull = regularization_gradient(&z, &vocab, ProjectionMode::HardNearest)?;
        println!(
            "z = {:?}  hard {:?}  soft {:.3?}  z - Proj z = {:.3?}",
            z.as_slice(),
            hard.as_slice(),
            knn.as_slice(),
            pull.as_slice()
        );
    }
    Ok(())
}
