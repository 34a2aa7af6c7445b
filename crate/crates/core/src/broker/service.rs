use crate::numeric::LabeledDataset;
use crate::protocol::{ConnId, Endpoint, ErrorCode, Message};

use super::{Broker, BrokerConfig, BrokerError, LearningTask};

/// Network-facing broker process: accepts one `curate` and then serves the
/// resulting task.
pub struct BrokerService {
    config: BrokerConfig,
    address: String,
    broker: Option<Broker>,
}

impl BrokerService {
    pub fn new(config: BrokerConfig, address: impl Into<String>) -> Self {
        Self {
            config,
            address: address.into(),
            broker: None,
        }
    }

    pub fn set_address(&mut self, address: impl Into<String>) {
        self.address = address.into();
    }

    pub fn broker(&self) -> Option<&Broker> {
        self.broker.as_ref()
    }

    pub fn broker_mut(&mut self) -> Option<&mut Broker> {
        self.broker.as_mut()
    }

    pub fn curate(&mut self, task: LearningTask) -> Result<&Broker, BrokerError> {
        if let Some(existing) = &self.broker {
            return Err(BrokerError::DuplicateModel(existing.task().model_id.clone()));
        }
        self.broker = Some(Broker::curate(task, self.config.clone())?);
        Ok(self.broker.as_ref().expect("just set"))
    }
}

impl Endpoint for BrokerService {
    fn dim(&self) -> Option<usize> {
        self.broker.as_ref().map(|b| b.task().dim)
    }

    fn handle(&mut self, conn: ConnId, msg: Message, now_ms: u64) -> Message {
        match msg {
            Message::Curate {
                model_id,
                dim,
                min_clients,
                max_clients,
                max_iterations,
                validation_set,
            } => {
                let validation_set = match LabeledDataset::new(validation_set.features, validation_set.labels) {
                    Ok(v) => v,
                    Err(e) => return Message::error(ErrorCode::Malformed, format!("validation set: {e}")),
                };
                let task = LearningTask {
                    model_id: model_id.clone(),
                    dim,
                    min_clients,
                    max_clients,
                    max_iterations,
                    validation_set,
                };
                match self.curate(task) {
                    Ok(_) => Message::CurateAck {
                        model_id,
                        address: self.address.clone(),
                    },
                    Err(BrokerError::InvalidTask(m)) if m.contains("features") => {
                        Message::error(ErrorCode::SchemaMismatch, m)
                    }
                    Err(e) => Message::error(ErrorCode::Malformed, e.to_string()),
                }
            }
            other => match self.broker.as_mut() {
                Some(broker) => broker.handle(conn, other, now_ms),
                None => Message::error(ErrorCode::NotStarted, "no model curated yet"),
            },
        }
    }
}
