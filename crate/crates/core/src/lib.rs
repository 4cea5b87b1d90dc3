pub mod at;
pub mod call;
pub mod gateway;
pub mod mms;
pub mod services;
pub mod sim;
pub mod sms;
